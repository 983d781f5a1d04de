//! Scenario execution: builds the named states, runs the tasks in order and
//! writes their CSV tables plus `report.json`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gpx_core::hes::{write_moments_header, write_moments_row};
use gpx_core::kernel::{closed_form_kernel_1d, closed_form_kernel_3d, KernelContext};
use gpx_core::model::ExampleKind;
use gpx_core::moments::moment_point;
use gpx_core::reference::{split_step_evolve, OracleConfig};
use gpx_core::symmetry::{fock_state, ladder_apply, quasi_energy, Ladder};
use gpx_core::{
    evolve, evolve_inverse, integrate_hes, Complex64, EvolveOptions, GpxError, Grid, GridState, MomentPoint,
    OutputGrid, QuadraticModel, Tolerance,
};
use log::info;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Scenario, StateSpec, TaskSpec};
use crate::report::{emit_report, Check, Report};
use crate::CliError;

const TOL_NORM: f64 = 1e-8;
const TOL_MOMENTS: f64 = 1e-6;
const TOL_ROUNDTRIP: f64 = 1e-8;
const TOL_ORACLE: f64 = 1e-6;
const TOL_LADDER_STATE: f64 = 1e-7;
const TOL_LADDER_COEFF: f64 = 1e-6;
const TOL_ORTHO: f64 = 1e-8;
const TOL_QUASI_ENERGY: f64 = 1e-5;
const TOL_KERNEL: f64 = 1e-9;

/// Everything a task needs, built once per scenario.
pub struct Session<'a> {
    pub scenario: &'a Scenario,
    pub model: QuadraticModel,
    pub grid: Grid,
    pub opts: EvolveOptions,
    pub out: PathBuf,
    states: BTreeMap<String, GridState>,
    file_counts: HashMap<&'static str, usize>,
}

impl<'a> Session<'a> {
    pub fn new(scenario: &'a Scenario) -> Result<Self, CliError> {
        scenario.validate()?;
        let model = scenario.build_model()?;
        let grid = scenario.build_grid(model.dim())?;
        let out = scenario.output_dir();
        fs::create_dir_all(&out)?;
        let mut session = Session {
            scenario,
            model,
            grid,
            opts: scenario.evolve_options(),
            out,
            states: BTreeMap::new(),
            file_counts: HashMap::new(),
        };
        for name in scenario.states.keys() {
            session.state(name).map_err(|e| CliError::Config(vec![format!("state {name}: {e}")]))?;
        }
        Ok(session)
    }

    fn state(&mut self, name: &str) -> Result<GridState, CliError> {
        if let Some(s) = self.states.get(name) {
            return Ok(s.clone());
        }
        let spec = self.scenario.states.get(name).ok_or_else(|| CliError::Config(vec![format!("undefined state {name:?}")]))?;
        let hbar = self.model.hbar();
        let built = match spec {
            StateSpec::Gaussian { center, momentum, width, chirp, amplitude, t } => {
                gaussian(&self.grid, hbar, center, momentum, width, *chirp, *amplitude, *t)
            }
            StateSpec::Fock { n, t } => fock_state(&self.model, *n)?.on_grid(&self.grid, *t)?,
            StateSpec::Superposition { terms } => {
                let mut acc: Option<GridState> = None;
                for term in terms {
                    let s = self.state(&term.state)?.resampled(&self.grid)?;
                    let c = Complex64::new(term.re, term.im);
                    acc = Some(match acc {
                        None => s.scaled(c),
                        Some(a) => {
                            if a.t != s.t {
                                return Err(CliError::Config(vec![format!(
                                    "state {name}: terms given at different times {} and {}",
                                    a.t, s.t
                                )]));
                            }
                            GridState::linear_combination(Complex64::new(1.0, 0.0), &a, c, &s)?
                        }
                    });
                }
                acc.ok_or_else(|| CliError::Config(vec![format!("state {name}: empty superposition")]))?
            }
            StateSpec::File { path } => GridState::load(&self.scenario.resolve(path))?,
        };
        self.states.insert(name.to_string(), built.clone());
        Ok(built)
    }

    /// `base.ext` for the first task of a kind, `base_2.ext`, … after that.
    fn file(&mut self, kind: &'static str, base: &str, ext: &str) -> PathBuf {
        let k = self.file_counts.entry(kind).or_insert(0);
        *k += 1;
        if *k == 1 {
            self.out.join(format!("{base}.{ext}"))
        } else {
            self.out.join(format!("{base}_{k}.{ext}"))
        }
    }

    fn on_grid(&self) -> EvolveOptions {
        self.opts.clone().with_output_grid(OutputGrid::Given(self.grid.clone()))
    }
}

/// Normalized Gaussian packet (up to `amplitude`) at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn gaussian(
    grid: &Grid,
    hbar: f64,
    center: &[f64],
    momentum: &[f64],
    width: &[f64],
    chirp: f64,
    amplitude: f64,
    t: f64,
) -> GridState {
    GridState::from_fn(grid.clone(), t, hbar, |x| {
        let mut log_amp = amplitude.ln();
        let mut phase = 0.0;
        for k in 0..x.len() {
            let d = x[k] - center[k];
            let w = width[k];
            log_amp += -0.25 * (PI * w * w).ln() - 0.5 * d * d / (w * w);
            phase += momentum.get(k).copied().unwrap_or(0.0) * d / hbar + 0.5 * chirp * d * d;
        }
        Complex64::from_polar(log_amp.exp(), phase)
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn time_label(t: f64) -> String {
    format!("{t}")
}

fn write_density(path: &Path, state: &GridState) -> Result<(), CliError> {
    let mut w = csv(path)?;
    let n = state.dim();
    let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
    header.push("density".into());
    writeln!(w, "{}", header.join(","))?;
    let mut x = vec![0.0; n];
    for (i, v) in state.data.iter().enumerate() {
        state.grid.point(i, &mut x);
        let mut row: Vec<String> = x.iter().map(|&c| fmt(c)).collect();
        row.push(fmt(v.norm_sqr()));
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn task_evolve(sess: &mut Session, state: &str, densities: bool, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let psi = sess.state(state).map_err(into_core)?;
    let model = &sess.model;
    let g0 = moment_point(&psi)?;
    let kt = model.kappa_tilde(psi.norm_squared());
    let ode_tol = sess.opts.tol;
    let opts = sess.on_grid();
    let schedule = sess.scenario.schedule.clone();

    let mut rows = Vec::new();
    let mut worst_norm: f64 = 0.0;
    let mut worst_moments: f64 = 0.0;
    let mut outputs = Vec::new();
    for &t in &schedule {
        info!("evolve {state}: t = {t}");
        let out = evolve(model, &psi, t, &opts)?;
        let measured = moment_point(&out)?;
        let predicted = integrate_hes(model, kt, &g0, psi.t, t, &ode_tol)?.at(t)?;
        worst_norm = worst_norm.max((out.norm_squared() - psi.norm_squared()).abs() / psi.norm_squared());
        worst_moments = worst_moments.max(measured.max_deviation(&predicted));
        rows.push((t, measured, predicted));
        outputs.push(out);
    }

    let moments_path = sess.file("moments", "moments", "csv");
    let hes_path = sess.file("moments_hes", "moments_hes", "csv");
    let n2 = 2 * sess.model.dim();
    let mut w = csv(&moments_path).map_err(into_core)?;
    let mut wh = csv(&hes_path).map_err(into_core)?;
    write_moments_header(&mut w, n2)?;
    write_moments_header(&mut wh, n2)?;
    for (t, measured, predicted) in &rows {
        write_moments_row(&mut w, *t, measured)?;
        write_moments_row(&mut wh, *t, predicted)?;
    }
    w.flush()?;
    wh.flush()?;
    if densities {
        for (t, out) in schedule.iter().zip(&outputs) {
            let path = sess.out.join(format!("density_t{}.csv", time_label(*t)));
            write_density(&path, out).map_err(into_core)?;
        }
    }
    Ok(vec![
        Check::at_most(format!("evolve/{state}/norm-drift"), worst_norm, tol.unwrap_or(TOL_NORM)),
        Check::at_most(format!("evolve/{state}/moments-vs-hes"), worst_moments, tol.unwrap_or(TOL_MOMENTS)),
    ])
}

fn task_roundtrip(sess: &mut Session, state: &str, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let psi = sess.state(state).map_err(into_core)?;
    let back_opts = sess.opts.clone().with_output_grid(OutputGrid::Given(psi.grid.clone()));
    let path = sess.file("roundtrip", "roundtrip", "csv");
    let mut w = csv(&path).map_err(into_core)?;
    writeln!(w, "t,l2_error")?;
    let mut worst: f64 = 0.0;
    for &t in &sess.scenario.schedule {
        info!("inverse-roundtrip {state}: t = {t}");
        let forward = evolve(&sess.model, &psi, t, &sess.opts)?;
        let back = evolve_inverse(&sess.model, &forward, psi.t, &back_opts)?;
        let err = back.l2_distance(&psi)?;
        worst = worst.max(err);
        writeln!(w, "{},{}", fmt(t), fmt(err))?;
    }
    w.flush()?;
    Ok(vec![Check::at_most(format!("inverse-roundtrip/{state}"), worst, tol.unwrap_or(TOL_ROUNDTRIP))])
}

fn task_oracle(sess: &mut Session, state: &str, dt: f64, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let psi = sess.state(state).map_err(into_core)?;
    let opts = sess.on_grid();
    let cfg = OracleConfig::default().with_dt(dt);
    let path = sess.file("oracle_error", "oracle_error", "csv");
    let mut w = csv(&path).map_err(into_core)?;
    writeln!(w, "t,l2_difference")?;
    let mut oracle = psi.clone();
    let mut worst: f64 = 0.0;
    for &t in &sess.scenario.schedule {
        info!("oracle-compare {state}: t = {t}");
        oracle = split_step_evolve(&sess.model, &oracle, t, &cfg)?;
        let exact = evolve(&sess.model, &psi, t, &opts)?;
        let diff = exact.l2_distance(&oracle)?;
        worst = worst.max(diff);
        writeln!(w, "{},{}", fmt(t), fmt(diff))?;
    }
    w.flush()?;
    Ok(vec![Check::at_most(format!("oracle-compare/{state}"), worst, tol.unwrap_or(TOL_ORACLE))])
}

fn task_ladder(sess: &mut Session, n_max: usize, t: f64, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let path = sess.file("ladder", "ladder", "csv");
    let model = &sess.model;
    let opts = sess.on_grid();
    let closed: Vec<GridState> =
        (0..=n_max + 1).map(|n| fock_state(model, n).and_then(|f| f.on_grid(&sess.grid, t))).collect::<Result<_, _>>()?;

    let mut chain = vec![closed[0].clone()];
    let mut state_err = vec![0.0];
    for n in 0..n_max {
        info!("ladder: raising n = {n}");
        let up = ladder_apply(model, Ladder::Raise, &chain[n], &opts)?;
        let next = up.scaled(Complex64::new(1.0 / ((n + 1) as f64).sqrt(), 0.0));
        state_err.push(next.l2_distance(&closed[n + 1])?);
        chain.push(next);
    }

    let mut w = csv(&path).map_err(into_core)?;
    writeln!(w, "n,raise_re,raise_im,raise_expected,lower_re,lower_im,lower_expected,state_error")?;
    let mut worst_coeff: f64 = 0.0;
    for n in 0..=n_max {
        let up = ladder_apply(model, Ladder::Raise, &closed[n], &opts)?;
        let raise = closed[n + 1].inner(&up)?;
        let raise_expected = ((n + 1) as f64).sqrt();
        worst_coeff = worst_coeff.max((raise - raise_expected).norm() / raise_expected);
        let down = ladder_apply(model, Ladder::Lower, &closed[n], &opts)?;
        let lower_expected = (n as f64).sqrt();
        let lower = if n == 0 {
            worst_coeff = worst_coeff.max(down.norm());
            Complex64::new(down.norm(), 0.0)
        } else {
            let c = closed[n - 1].inner(&down)?;
            worst_coeff = worst_coeff.max((c - lower_expected).norm() / lower_expected);
            c
        };
        writeln!(
            w,
            "{n},{},{},{},{},{},{},{}",
            fmt(raise.re),
            fmt(raise.im),
            fmt(raise_expected),
            fmt(lower.re),
            fmt(lower.im),
            fmt(lower_expected),
            fmt(state_err[n])
        )?;
    }
    w.flush()?;

    let mut worst_ortho: f64 = 0.0;
    for (i, a) in chain.iter().enumerate() {
        for (j, b) in chain.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst_ortho = worst_ortho.max((a.inner(b)? - expected).norm());
        }
    }
    let worst_state = state_err.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("ladder/states-vs-closed-form", worst_state, tol.unwrap_or(TOL_LADDER_STATE)),
        Check::at_most("ladder/coefficients", worst_coeff, tol.unwrap_or(TOL_LADDER_COEFF)),
        Check::at_most("ladder/orthonormality", worst_ortho, tol.unwrap_or(TOL_ORTHO)),
    ])
}

fn wrap(phase: f64) -> f64 {
    (phase + PI).rem_euclid(2.0 * PI) - PI
}

/// Period of the 1D example's drive, or of the oscillator when undriven.
pub fn drive_period(model: &QuadraticModel) -> Result<f64, GpxError> {
    let p = model.example_1d_params()?;
    if p.omega > 0.0 {
        Ok(2.0 * PI / p.omega)
    } else {
        Ok(2.0 * PI / p.big_omega(model.kappa_tilde(1.0))?)
    }
}

fn task_quasi_energy(sess: &mut Session, n_max: usize, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let path = sess.file("quasi_energy", "quasi_energy", "csv");
    let model = &sess.model;
    let period = drive_period(model)?;
    let opts = sess.on_grid();
    let mut w = csv(&path).map_err(into_core)?;
    writeln!(w, "n,quasi_energy,phase_measured,phase_expected,phase_error")?;
    let mut worst: f64 = 0.0;
    for n in 0..=n_max {
        info!("quasi-energy: n = {n}");
        let psi = fock_state(model, n)?.on_grid(&sess.grid, 0.0)?;
        let out = evolve(model, &psi, period, &opts)?;
        let measured = psi.inner(&out)?.arg();
        let energy = quasi_energy(model, n)?;
        let expected = wrap(-energy * period / model.hbar());
        let err = wrap(measured - expected).abs();
        worst = worst.max(err);
        writeln!(w, "{n},{},{},{},{}", fmt(energy), fmt(measured), fmt(expected), fmt(err))?;
    }
    w.flush()?;
    Ok(vec![Check::at_most("quasi-energy/one-period-phase", worst, tol.unwrap_or(TOL_QUASI_ENERGY))])
}

fn random_moments(rng: &mut ChaCha8Rng, n: usize, hbar: f64) -> Result<MomentPoint, GpxError> {
    let z = DVector::from_fn(2 * n, |_, _| rng.gen_range(-1.0..1.0));
    let mut delta = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let sxx = rng.gen_range(0.3..1.5);
        let spp = 0.25 * hbar * hbar / sxx * rng.gen_range(1.0..1.5);
        let spx = rng.gen_range(-0.1..0.1) * (sxx * spp).sqrt();
        delta[(k, k)] = spp;
        delta[(n + k, n + k)] = sxx;
        delta[(k, n + k)] = spx;
        delta[(n + k, k)] = spx;
    }
    MomentPoint::new(z, delta)
}

fn task_kernel(sess: &mut Session, samples: usize, seed: u64, tol: Option<f64>) -> Result<Vec<Check>, GpxError> {
    let path = sess.file("kernel_crosscheck", "kernel_crosscheck", "csv");
    let model = &sess.model;
    let n = model.dim();
    let hbar = model.hbar();
    let kt = model.kappa_tilde(1.0);
    let ode_tol = Tolerance::new(1e-12, 1e-14);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = sess.scenario.model_spec().map_err(into_core)?;
    let limit = match spec.example {
        ExampleKind::OneD => PI / model.example_1d_params()?.big_omega(kt)?,
        ExampleKind::ThreeD => {
            let (w1, w2) = model.example_3d_params()?.frequencies(kt)?;
            PI / w1.max(w2)
        }
        ExampleKind::Custom => return Err(GpxError::Unsupported("no closed-form kernel for custom models".into())),
    };

    let mut w = csv(&path).map_err(into_core)?;
    writeln!(w, "sample,s,t,generic_re,generic_im,closed_re,closed_im,abs_error")?;
    let mut worst: f64 = 0.0;
    for i in 0..samples {
        let s = rng.gen_range(-1.0..1.0);
        let tau = rng.gen_range(0.05..0.95) * limit * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let g0 = random_moments(&mut rng, n, hbar)?;
        let ctx = KernelContext::build(model, kt, &g0, s, s + tau, &ode_tol)?;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.5..2.5)).collect();
        let closed = match spec.example {
            ExampleKind::OneD => closed_form_kernel_1d(
                &model.example_1d_params()?,
                kt,
                hbar,
                &ctx.endpoints(),
                ctx.action(),
                x[0],
                y[0],
                s + tau,
                s,
            )?,
            _ => closed_form_kernel_3d(
                &model.example_3d_params()?,
                kt,
                hbar,
                &ctx.endpoints(),
                ctx.action(),
                &x,
                &y,
                s + tau,
                s,
            )?,
        };
        let generic = ctx.green_function(&x, &y);
        let err = (generic - closed).norm();
        worst = worst.max(err);
        writeln!(
            w,
            "{i},{},{},{},{},{},{},{}",
            fmt(s),
            fmt(s + tau),
            fmt(generic.re),
            fmt(generic.im),
            fmt(closed.re),
            fmt(closed.im),
            fmt(err)
        )?;
    }
    w.flush()?;
    Ok(vec![Check::at_most("kernel-crosscheck/closed-form", worst, tol.unwrap_or(TOL_KERNEL))])
}

fn into_core(e: CliError) -> GpxError {
    match e {
        CliError::Core(g) => g,
        CliError::Io(io) => GpxError::Io(io),
        other => GpxError::Invalid(other.to_string()),
    }
}

/// Runs one task, tagging any failure with the task's name and position.
pub fn run_task(sess: &mut Session, index: usize, task: &TaskSpec) -> Result<Vec<Check>, CliError> {
    info!("task {index}: {}", task.name());
    let result = match task {
        TaskSpec::Evolve { state, densities, tol } => task_evolve(sess, state, *densities, *tol),
        TaskSpec::InverseRoundtrip { state, tol } => task_roundtrip(sess, state, *tol),
        TaskSpec::Ladder { n_max, t, tol } => task_ladder(sess, *n_max, *t, *tol),
        TaskSpec::QuasiEnergy { n_max, tol } => task_quasi_energy(sess, *n_max, *tol),
        TaskSpec::OracleCompare { state, dt, tol } => task_oracle(sess, state, *dt, *tol),
        TaskSpec::KernelCrosscheck { samples, seed, tol } => task_kernel(sess, *samples, *seed, *tol),
    };
    result.map_err(|source| CliError::Task { task: format!("{index} ({})", task.name()), source })
}

/// Runs every task of the scenario (optionally only those `keep` accepts)
/// and writes `report.json` into the output directory.
pub fn run_filtered(scenario: &Scenario, keep: impl Fn(&TaskSpec) -> bool) -> Result<Report, CliError> {
    let mut sess = Session::new(scenario)?;
    let mut checks = Vec::new();
    for (i, task) in scenario.tasks.iter().enumerate().filter(|(_, t)| keep(t)) {
        checks.extend(run_task(&mut sess, i, task)?);
    }
    let report = emit_report(&scenario.name, checks);
    report.write(&sess.out.join("report.json"))?;
    Ok(report)
}

/// Loads, validates and runs a scenario file.
pub fn run_scenario(path: &Path, overrides: &crate::config::Overrides) -> Result<Report, CliError> {
    let mut scenario = Scenario::load(path)?;
    scenario.apply(overrides);
    run_filtered(&scenario, |_| true)
}
