//! The nonlinear evolution operator, its inverse, the group law and the
//! superposition principle on grid states.
//!
//! `evolve` reads the constants of motion off the initial state, chooses a
//! chain of caustic-free kernel segments, and applies the segment kernels by
//! quadrature. Segments are chosen so that each kernel is well sampled by the
//! grids it maps between; when the direct step is too short or crosses a
//! conjugate point, the chain goes through intermediate times, which may lie
//! beyond the target time.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::grid::{Grid, GridState, DEFAULT_TAIL_TOL};
use crate::hes::{integrate_hes, Matriciant, MomentPoint, MomentTrajectory};
use crate::kernel::{caustic_metric, KernelContext, CAUSTIC_DIP, CAUSTIC_METRIC_FLOOR, CAUSTIC_TOL};
use crate::model::{exact_symmetric, QuadraticModel};
use crate::moments::moment_point;
use crate::ode::Tolerance;
use crate::quadrature::apply_kernel;

/// Where the evolved state is sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputGrid {
    /// Same lattice and extent as the input, shifted to the new mean position.
    Recenter,
    /// Exactly the input grid.
    Keep,
    /// A caller-supplied grid (used for the final segment only).
    Given(Grid),
}

/// How the effective coupling `κ̃` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// `κ̃ = κ‖ψ‖²` from the state being evolved.
    FromNorm,
    /// A fixed value.
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub tol: Tolerance,
    pub output_grid: OutputGrid,
    pub coupling: Coupling,
    pub tail_tol: f64,
    /// Bound on the kernel phase change across one input cell.
    pub max_phase_per_cell: f64,
    /// Minimum look-ahead when searching for intermediate times.
    pub scan_horizon: f64,
    pub max_segments: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            tol: Tolerance::default(),
            output_grid: OutputGrid::Recenter,
            coupling: Coupling::FromNorm,
            tail_tol: DEFAULT_TAIL_TOL,
            max_phase_per_cell: PI / 4.0,
            scan_horizon: 2.0 * PI,
            max_segments: 16,
        }
    }
}

impl EvolveOptions {
    pub fn with_output_grid(mut self, g: OutputGrid) -> Self {
        self.output_grid = g;
        self
    }

    pub fn with_coupling(mut self, c: Coupling) -> Self {
        self.coupling = c;
        self
    }
}

/// A chain of caustic-free kernel segments from `s` to `t`.
#[derive(Clone, Debug)]
pub struct EvolutionPlan {
    pub s: f64,
    pub t: f64,
    pub kappa_tilde: f64,
    pub initial: MomentPoint,
    /// `s = nodes[0], …, nodes[last] = t`.
    pub nodes: Vec<f64>,
    pub contexts: Vec<KernelContext>,
    /// Output grid of each segment.
    pub grids: Vec<Grid>,
}

impl EvolutionPlan {
    pub fn segments(&self) -> usize {
        self.contexts.len()
    }

    /// Moments at the target time.
    pub fn final_moments(&self) -> &MomentPoint {
        self.contexts.last().map(|c| c.end()).unwrap_or(&self.initial)
    }
}

pub(crate) fn kappa_tilde_for(model: &QuadraticModel, psi: &GridState, coupling: Coupling) -> f64 {
    match coupling {
        Coupling::FromNorm => model.kappa_tilde(psi.norm_squared()),
        Coupling::Fixed(k) => k,
    }
}

/// Output grid for a segment ending at mean position `x_end`.
fn segment_grid(policy: &OutputGrid, input: &Grid, original: &Grid, x_end: &[f64], last: bool) -> Grid {
    match policy {
        OutputGrid::Recenter => input.recentered(x_end),
        OutputGrid::Keep => original.clone(),
        OutputGrid::Given(g) if last => g.clone(),
        OutputGrid::Given(_) => input.recentered(x_end),
    }
}

/// Largest `|x_k − c_k|` over the grid, per axis.
fn reach(grid: &Grid, c: &[f64]) -> Vec<f64> {
    grid.axes()
        .iter()
        .zip(c)
        .map(|(a, &ck)| (a.min - ck).abs().max((a.max() - ck).abs()))
        .collect()
}

/// Data the planner needs about the grid and moments at a segment start.
struct SegmentStart<'a> {
    g: &'a MomentPoint,
    grid: &'a Grid,
}

/// Phase resolution of a segment kernel with blocks of `a`.
///
/// `local` is the worst kernel phase change per input cell where both the
/// input and the output wavefunction carry weight. `alias` bounds the same
/// rate over the whole output grid; it must stay below `π` so that no
/// periodic replica of the output lands on the grid. `None` if `λ₃` is
/// singular.
/// Standard deviations beyond which a Gaussian-like wavefunction is
/// treated as negligible (amplitude below `e^{-32}`).
const WEIGHT_SIGMAS: f64 = 8.0;

struct CellPhase {
    local: f64,
    alias: f64,
}

fn phase_per_cell(
    a: &Matriciant,
    start: &SegmentStart<'_>,
    out_grid: &Grid,
    g_end: &MomentPoint,
    hbar: f64,
) -> Option<CellPhase> {
    let n = a.dim();
    let b = a.blocks();
    let c = b.l3.clone().try_inverse()?;
    let qy = exact_symmetric(&(&b.l1 * &c));
    let x0 = start.g.x();
    let x_end = g_end.x();
    let ry_grid = reach(start.grid, x0.as_slice());
    let rx_grid = reach(out_grid, x_end.as_slice());
    let sxx = start.g.sigma_xx();
    let spp = start.g.sigma_pp();
    let sxx_end = g_end.sigma_xx();
    let mut local: f64 = 0.0;
    let mut alias: f64 = 0.0;
    for k in 0..n {
        let mut base = WEIGHT_SIGMAS * spp[(k, k)].max(0.0).sqrt();
        let mut near = 0.0;
        let mut far = 0.0;
        for l in 0..n {
            base += qy[(k, l)].abs() * (WEIGHT_SIGMAS * sxx[(l, l)].max(0.0).sqrt()).min(ry_grid[l]);
            let rx = (WEIGHT_SIGMAS * sxx_end[(l, l)].max(0.0).sqrt()).min(rx_grid[l]);
            near += c[(l, k)].abs() * rx;
            far += c[(l, k)].abs() * (rx + rx_grid[l]);
        }
        let dy = start.grid.axis(k).dx / hbar;
        local = local.max((base + near) * dy);
        alias = alias.max((base + far) * dy);
    }
    Some(CellPhase { local, alias })
}

fn hpp(model: &QuadraticModel, t: f64) -> DMatrix<f64> {
    let n = model.dim();
    model.hzz(t).view((0, 0), (n, n)).into_owned()
}

/// Checks that `(u, v]` is free of conjugate points, using `A(τ, u) =
/// A(τ, r)·A(u, r)⁻¹` from a trajectory launched at `r`.
fn caustic_free(traj: &MomentTrajectory, u: f64, v: f64, samples: usize) -> Result<bool> {
    let model = traj.model();
    let n = model.dim();
    let h = hpp(model, u);
    let h_smin = h.clone().singular_values().iter().copied().fold(f64::INFINITY, f64::min);
    let h_det = h.determinant();
    let a_u_inv = traj.matriciant(u)?.inverse();
    let expected = ((u - v).signum().powi(n as i32) * h_det).signum();
    let mut metrics: Vec<f64> = Vec::with_capacity(samples);
    for i in 1..=samples {
        let tau = u + (v - u) * i as f64 / samples as f64;
        let a = traj.matriciant(tau)?.compose(&a_u_inv);
        let l3 = a.blocks().l3;
        let det = l3.determinant();
        let metric = caustic_metric(&l3, tau - u, h_smin);
        if det.signum() != expected
            || det.abs() <= CAUSTIC_TOL * (tau - u).abs().powi(n as i32) * h_det.abs()
            || metric < CAUSTIC_METRIC_FLOOR
        {
            return Ok(false);
        }
        metrics.push(metric);
        if let [.., a, b, c] = metrics[..] {
            if b < a && b < c && b < CAUSTIC_DIP {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Plans the kernel chain for evolving a state with moments `g0` on `grid`
/// from `s` to `t`.
pub fn plan_evolution(
    model: &QuadraticModel,
    g0: &MomentPoint,
    kappa_tilde: f64,
    s: f64,
    t: f64,
    grid: &Grid,
    opts: &EvolveOptions,
) -> Result<EvolutionPlan> {
    let hbar = model.hbar();
    let mut nodes = vec![s];
    let mut r = s;
    let mut g_r = g0.clone();
    let mut grid_r = grid.clone();
    const SCAN: usize = 48;
    const SUB: usize = 24;

    'outer: loop {
        if nodes.len() > opts.max_segments {
            return Err(GpxError::Unresolvable(format!(
                "no admissible chain from {s} to {t} within {} segments",
                opts.max_segments
            )));
        }
        let dir = (t - r).signum();
        let horizon = (2.0 * (t - r).abs()).max(opts.scan_horizon);
        let far = r + dir * horizon;
        let traj = integrate_hes(model, kappa_tilde, &g_r, r, far, &opts.tol)?;
        let start = SegmentStart { g: &g_r, grid: &grid_r };

        let admissible = |u: f64, v: f64, from: &SegmentStart<'_>, a_uv: &Matriciant| -> Result<Option<f64>> {
            if !caustic_free(&traj, u, v, SUB)? {
                return Ok(None);
            }
            let g_v = traj.at(v)?;
            let last = v == t;
            let out = segment_grid(&opts.output_grid, from.grid, grid, g_v.x().as_slice(), last);
            Ok(phase_per_cell(a_uv, from, &out, &g_v, hbar)
                .filter(|p| p.local <= opts.max_phase_per_cell && p.alias < PI)
                .map(|p| p.local))
        };

        // Direct step.
        let a_rt = traj.matriciant(t)?;
        if admissible(r, t, &start, &a_rt)?.is_some() {
            nodes.push(t);
            break;
        }

        // Candidate intermediate times up to the first conjugate point.
        let mut candidates = Vec::new();
        for j in 1..=SCAN {
            let u = r + (far - r) * j as f64 / SCAN as f64;
            if !caustic_free(&traj, r, u, SUB)? {
                break;
            }
            let a_ru = traj.matriciant(u)?;
            if let Some(p) = admissible(r, u, &start, &a_ru)? {
                candidates.push((u, p));
            }
        }

        // Two-step completion with the best worst-case phase.
        let mut best: Option<(f64, f64)> = None;
        for &(u, p1) in &candidates {
            let g_u = traj.at(u)?;
            let last_grid = segment_grid(&opts.output_grid, &grid_r, grid, g_u.x().as_slice(), false);
            let from = SegmentStart { g: &g_u, grid: &last_grid };
            let a_ut = traj.matriciant(t)?.compose(&traj.matriciant(u)?.inverse());
            if let Some(p2) = admissible(u, t, &from, &a_ut)? {
                let worst = p1.max(p2);
                if best.is_none_or(|(_, b)| worst < b) {
                    best = Some((u, worst));
                }
            }
        }
        if let Some((u, _)) = best {
            nodes.push(u);
            nodes.push(t);
            break 'outer;
        }

        // Otherwise advance as far as possible without passing t.
        let step = candidates
            .iter()
            .filter(|(u, _)| dir * (t - u) > 0.0)
            .map(|&(u, _)| u)
            .max_by(|a, b| (dir * (a - r)).total_cmp(&(dir * (b - r))));
        match step {
            Some(u) => {
                let g_u = traj.at(u)?;
                grid_r = segment_grid(&opts.output_grid, &grid_r, grid, g_u.x().as_slice(), false);
                g_r = g_u;
                r = u;
                nodes.push(u);
            }
            None => {
                return Err(GpxError::Unresolvable(format!(
                    "no admissible kernel step from t = {r} towards {t}; the grid is too coarse \
                     for the phase bound {:.3}",
                    opts.max_phase_per_cell
                )))
            }
        }
    }

    // Segment kernels, each integrated from the previous segment's end.
    let mut contexts = Vec::with_capacity(nodes.len() - 1);
    let mut grids = Vec::with_capacity(nodes.len() - 1);
    let mut g = g0.clone();
    let mut in_grid = grid.clone();
    for w in nodes.windows(2) {
        let ctx = KernelContext::build(model, kappa_tilde, &g, w[0], w[1], &opts.tol)?;
        let last = contexts.len() + 2 == nodes.len();
        let out = segment_grid(&opts.output_grid, &in_grid, grid, ctx.end().x().as_slice(), last);
        g = ctx.end().clone();
        in_grid = out.clone();
        grids.push(out);
        contexts.push(ctx);
    }
    log::debug!("evolution plan {s} -> {t}: nodes {nodes:?}");
    Ok(EvolutionPlan { s, t, kappa_tilde, initial: g0.clone(), nodes, contexts, grids })
}

/// `U_κ(t, s, ψ)` with `s = ψ.t`.
pub fn evolve(model: &QuadraticModel, psi: &GridState, t: f64, opts: &EvolveOptions) -> Result<GridState> {
    evolve_with_plan(model, psi, t, opts).map(|(state, _)| state)
}

/// As [`evolve`], also returning the plan that was executed.
pub fn evolve_with_plan(
    model: &QuadraticModel,
    psi: &GridState,
    t: f64,
    opts: &EvolveOptions,
) -> Result<(GridState, EvolutionPlan)> {
    if psi.dim() != model.dim() {
        return Err(GpxError::DimensionMismatch(format!(
            "state of dimension {} for a model of dimension {}",
            psi.dim(),
            model.dim()
        )));
    }
    psi.check_resolved(opts.tail_tol)?;
    let g0 = moment_point(psi)?;
    let kappa_tilde = kappa_tilde_for(model, psi, opts.coupling);
    let s = psi.t;
    if t == s {
        let plan = EvolutionPlan {
            s,
            t,
            kappa_tilde,
            initial: g0,
            nodes: vec![s],
            contexts: Vec::new(),
            grids: Vec::new(),
        };
        let mut out = psi.clone();
        if let OutputGrid::Given(g) = &opts.output_grid {
            out = out.resampled(g)?;
        }
        return Ok((out, plan));
    }
    let plan = plan_evolution(model, &g0, kappa_tilde, s, t, &psi.grid, opts)?;
    let mut state = psi.clone();
    for (i, (ctx, grid)) in plan.contexts.iter().zip(&plan.grids).enumerate() {
        state = apply_kernel(ctx, &state, grid)?;
        if i + 1 < plan.contexts.len() {
            state.check_tails(opts.tail_tol).map_err(|e| match e {
                GpxError::TailMass(m) => GpxError::TailMass(format!("intermediate state at t = {}: {m}", ctx.t())),
                other => other,
            })?;
        }
    }
    state.t = t;
    Ok((state, plan))
}

/// `U_κ⁻¹`: maps a solution at `Ψ.t` back to time `s`, with the constants
/// read off `Ψ` itself.
pub fn evolve_inverse(model: &QuadraticModel, big_psi: &GridState, s: f64, opts: &EvolveOptions) -> Result<GridState> {
    evolve(model, big_psi, s, opts)
}

/// `U(t, r, U(r, s, ψ))`.
pub fn evolve_composed(
    model: &QuadraticModel,
    psi: &GridState,
    r: f64,
    t: f64,
    opts: &EvolveOptions,
) -> Result<GridState> {
    if r == psi.t {
        return evolve(model, psi, t, opts);
    }
    let mid_opts = match &opts.output_grid {
        OutputGrid::Given(_) => opts.clone().with_output_grid(OutputGrid::Recenter),
        _ => opts.clone(),
    };
    let mid = evolve(model, psi, r, &mid_opts)?;
    evolve(model, &mid, t, opts)
}

/// `U(t, s, c₁·U⁻¹(t, s, Ψ₁) + c₂·U⁻¹(t, s, Ψ₂))`.
pub fn superpose(
    model: &QuadraticModel,
    psi1: &GridState,
    psi2: &GridState,
    c1: Complex64,
    c2: Complex64,
    s: f64,
    opts: &EvolveOptions,
) -> Result<GridState> {
    if psi1.t != psi2.t {
        return Err(GpxError::Invalid(format!("solutions given at different times {} and {}", psi1.t, psi2.t)));
    }
    let t = psi1.t;
    let back_opts = match &opts.output_grid {
        OutputGrid::Given(_) => opts.clone().with_output_grid(OutputGrid::Recenter),
        _ => opts.clone(),
    };
    let phi1 = evolve_inverse(model, psi1, s, &back_opts)?;
    let phi2 = evolve_inverse(model, psi2, s, &back_opts)?;
    let combined = GridState::linear_combination(c1, &phi1, c2, &phi2)?;
    let total: f64 = combined.data.iter().map(|v| v.norm_sqr()).sum();
    let reference = c1.norm_sqr() * phi1.norm_squared() + c2.norm_sqr() * phi2.norm_squared();
    if total == 0.0 || combined.norm_squared() <= 1e-14 * reference.max(f64::MIN_POSITIVE) {
        return Err(GpxError::ZeroNorm);
    }
    evolve(model, &combined, t, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example1DParams;
    use crate::moments::moment_point;

    fn coherent(grid: &Grid, x0: f64, p0: f64, width: f64) -> GridState {
        GridState::from_fn(grid.clone(), 0.0, 1.0, |x| {
            let d = x[0] - x0;
            let amp = (1.0 / (PI * width * width)).powf(0.25) * (-0.5 * d * d / (width * width)).exp();
            Complex64::from_polar(amp, p0 * d)
        })
    }

    fn grid() -> Grid {
        Grid::cube(1, -12.0, 12.0, 1024).unwrap()
    }

    #[test]
    fn harmonic_coherent_state() {
        let model = QuadraticModel::harmonic(1.0, 1.0, 1.0).unwrap();
        let psi = coherent(&grid(), 1.0, 0.0, 1.0);
        for &t in &[0.7, 2.0, 5.0] {
            let out = evolve(&model, &psi, t, &EvolveOptions::default()).unwrap();
            let g = moment_point(&out).unwrap();
            assert!((g.z[1] - t.cos()).abs() < 1e-8, "t={t}: {}", g.z[1]);
            assert!((g.z[0] + t.sin()).abs() < 1e-8);
            assert!((g.delta[(1, 1)] - 0.5).abs() < 1e-8);
            assert!((out.norm_squared() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn short_and_caustic_crossing_plans() {
        let p = Example1DParams::reference();
        let model = QuadraticModel::example_1d(&p, 0.5, 1.0).unwrap();
        let psi = coherent(&grid(), 1.0, 0.5, 0.8);
        let (_, plan) = evolve_with_plan(&model, &psi, 0.01, &EvolveOptions::default()).unwrap();
        assert_eq!(plan.segments(), 2);
        assert!(plan.nodes[1] > 0.01);
        let (_, plan) = evolve_with_plan(&model, &psi, 4.0, &EvolveOptions::default()).unwrap();
        assert!(plan.segments() >= 2);
        let (same, plan) = evolve_with_plan(&model, &psi, 0.0, &EvolveOptions::default()).unwrap();
        assert_eq!(plan.segments(), 0);
        assert_eq!(same, psi);
    }

    #[test]
    fn inverse_roundtrip() {
        let p = Example1DParams::reference();
        let model = QuadraticModel::example_1d(&p, 0.5, 1.0).unwrap();
        let psi = coherent(&grid(), 0.5, -0.3, 0.9);
        let fwd = evolve(&model, &psi, 1.3, &EvolveOptions::default()).unwrap();
        let back = evolve_inverse(&model, &fwd, 0.0, &EvolveOptions::default()).unwrap();
        assert!(back.l2_distance(&psi).unwrap() < 1e-8);
    }

    #[test]
    fn linear_superposition_when_uncoupled() {
        let model = QuadraticModel::harmonic(1.0, 1.1, 1.0).unwrap();
        let a = coherent(&grid(), 1.0, 0.0, 1.0);
        let b = coherent(&grid(), -1.0, 0.4, 0.8);
        let opts = EvolveOptions::default().with_output_grid(OutputGrid::Keep);
        let ea = evolve(&model, &a, 1.0, &opts).unwrap();
        let eb = evolve(&model, &b, 1.0, &opts).unwrap();
        let (c1, c2) = (Complex64::new(0.6, 0.0), Complex64::new(0.8, 0.0));
        let sup = superpose(&model, &ea, &eb, c1, c2, 0.0, &opts).unwrap();
        let lin = GridState::linear_combination(c1, &ea, c2, &eb).unwrap();
        assert!(sup.l2_distance(&lin).unwrap() < 1e-8);
        let zero = superpose(&model, &ea, &ea, Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0), 0.0, &opts);
        assert!(matches!(zero, Err(GpxError::ZeroNorm)));
    }

    #[test]
    fn coarse_grid_is_unresolvable() {
        let model = QuadraticModel::harmonic(1.0, 1.0, 1.0).unwrap();
        let g = Grid::cube(1, -12.0, 12.0, 128).unwrap();
        let psi = coherent(&g, 0.0, 0.0, 1.0);
        let opts = EvolveOptions { max_phase_per_cell: 0.05, ..EvolveOptions::default() };
        assert!(matches!(evolve(&model, &psi, 1.0, &opts), Err(GpxError::Unresolvable(_))));
    }
}
