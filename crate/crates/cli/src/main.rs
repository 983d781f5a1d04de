use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpx_cli::config::{Overrides, Scenario, TaskSpec};
use gpx_cli::report::{emit_report, Check, Report};
use gpx_cli::{run_filtered, CliError, GOLDEN};
use gpx_core::symmetry::{fock_state, quasi_energy};
use gpx_core::{Example1DParams, Grid, GridState, QuadraticModel};
use log::info;

#[derive(Parser)]
#[command(name = "gpx", version, about = "Exact evolution of the nonlocal Gross-Pitaevskii equation with quadratic potentials")]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the scenario's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Tolerance applied to every check.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Grid points per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads for the kernel quadrature.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a scenario.
    Scenario,
    /// Run only the evolve tasks of a scenario.
    Evolve,
    /// Write the Fock states of the 1D example at time `t`.
    Fock {
        #[arg(long, default_value_t = 5)]
        n_max: usize,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
    },
    /// Tabulate the quasi-energies of the 1D example.
    Spectrum {
        #[arg(long, default_value_t = 10)]
        n_max: usize,
    },
    /// Replay the shipped golden scenarios (or the one given by --config).
    Verify,
}

/// Exit statuses: 0 all checks pass, 1 a check failed, 2 bad input, 3 a task failed.
fn status(e: &CliError) -> ExitCode {
    match e {
        CliError::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(3),
    }
}

fn overrides(cli: &Cli) -> Overrides {
    Overrides { out: cli.out.clone(), tol: cli.tol, grid: cli.grid }
}

fn require_config(cli: &Cli) -> Result<Scenario, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config(vec!["--config PATH is required".into()]))?;
    let mut s = Scenario::load(path)?;
    s.apply(&overrides(cli));
    Ok(s)
}

fn print_report(report: &Report) {
    for c in &report.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {:.3e} (tolerance {:.1e})", c.name, c.value, c.tolerance);
    }
    println!("{}: {}", report.scenario, if report.pass { "pass" } else { "FAIL" });
}

/// Model and grid for the 1D-example subcommands: from --config if given,
/// otherwise the reference parameters with κ = 0.5 on [-12, 12].
fn example_1d(cli: &Cli) -> Result<(QuadraticModel, Grid, PathBuf), CliError> {
    match &cli.config {
        Some(_) => {
            let s = require_config(cli)?;
            let model = s.build_model()?;
            let grid = s.build_grid(model.dim())?;
            Ok((model, grid, s.output_dir()))
        }
        None => {
            let model = QuadraticModel::example_1d(&Example1DParams::reference(), 0.5, 1.0)?;
            let grid = Grid::cube(1, -12.0, 12.0, cli.grid.unwrap_or(1024))?;
            Ok((model, grid, cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))))
        }
    }
}

fn fock(cli: &Cli, n_max: usize, t: f64) -> Result<Report, CliError> {
    let (model, grid, out) = example_1d(cli)?;
    fs::create_dir_all(&out)?;
    let states: Vec<GridState> =
        (0..=n_max).map(|n| fock_state(&model, n).and_then(|f| f.on_grid(&grid, t))).collect::<Result<_, _>>()?;
    for (n, s) in states.iter().enumerate() {
        s.write_csv(BufWriter::new(File::create(out.join(format!("fock_n{n}.csv")))?))?;
    }
    let mut worst: f64 = 0.0;
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.inner(b)? - expected).norm());
        }
    }
    let report = emit_report("fock", vec![Check::at_most("fock/orthonormality", worst, cli.tol.unwrap_or(1e-8))]);
    report.write(&out.join("report.json"))?;
    Ok(report)
}

fn spectrum(cli: &Cli, n_max: usize) -> Result<Report, CliError> {
    let (model, _, out) = example_1d(cli)?;
    fs::create_dir_all(&out)?;
    let mut w = BufWriter::new(File::create(out.join("spectrum.csv"))?);
    writeln!(w, "n,quasi_energy")?;
    println!("{:>4}  {:>24}", "n", "quasi-energy");
    for n in 0..=n_max {
        let e = quasi_energy(&model, n)?;
        writeln!(w, "{n},{e:.16e}")?;
        println!("{n:>4}  {e:>24.16e}");
    }
    w.flush()?;
    let report = emit_report("spectrum", Vec::new());
    report.write(&out.join("report.json"))?;
    Ok(report)
}

fn verify(cli: &Cli) -> Result<bool, CliError> {
    if cli.config.is_some() {
        let report = run_filtered(&require_config(cli)?, |_| true)?;
        print_report(&report);
        return Ok(report.pass);
    }
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("gpx-verify"));
    let mut all = true;
    for (name, text) in GOLDEN {
        info!("verify: {name}");
        let mut s = Scenario::from_json(text, Path::new(""))?;
        s.apply(&Overrides { out: Some(root.join(name)), tol: cli.tol, grid: None });
        let report = run_filtered(&s, |_| true)?;
        print_report(&report);
        all &= report.pass;
    }
    Ok(all)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let report = match &cli.command {
        Command::Scenario => run_filtered(&require_config(cli)?, |_| true)?,
        Command::Evolve => run_filtered(&require_config(cli)?, |t| matches!(t, TaskSpec::Evolve { .. }))?,
        Command::Fock { n_max, t } => fock(cli, *n_max, *t)?,
        Command::Spectrum { n_max } => spectrum(cli, *n_max)?,
        Command::Verify => return verify(cli),
    };
    print_report(&report);
    Ok(report.pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GPX_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("gpx: cannot configure {k} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("gpx: {e}");
            status(&e)
        }
    }
}
