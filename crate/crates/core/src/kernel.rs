//! Green function of the linear associated Schrödinger equation.
//!
//! For a caustic-free interval `[s, t]` the kernel is
//!
//! ```text
//! G(x, y) = det(−2πiħλ₃)^{−1/2} · exp{(i/ħ)[S(t) − S(s) + ⟨P(t), Δx⟩ − ⟨P(s), Δy⟩
//!           − ½⟨Δy, λ₁λ₃⁻¹Δy⟩ + ⟨Δx, λ₃⁻¹Δy⟩ − ½⟨Δx, λ₃⁻¹λ₄Δx⟩]}
//! ```
//!
//! with `Δx = x − X(t)`, `Δy = y − X(s)` and `λ₁..λ₄` the blocks of the
//! matriciant `A(t, s)`. The square-root branch is fixed by the short-time
//! asymptote `λ₃ ≈ −(t − s)ℋ_pp(s)` and carried along the interval, which is
//! required to contain no conjugate point.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::hes::{integrate_hes, Blocks, MomentPoint, MomentTrajectory};
use crate::model::{exact_symmetric, Example1DParams, Example3DParams, QuadraticModel};
use crate::ode::Tolerance;

/// Relative threshold on `|det λ₃|` against `|t − s|ⁿ·|det ℋ_pp(s)|`.
pub const CAUSTIC_TOL: f64 = 1e-8;
/// A sampled caustic metric below this value is treated as a conjugate point.
pub const CAUSTIC_METRIC_FLOOR: f64 = 1e-3;
/// An interior local minimum of the metric below this value is treated as a
/// conjugate point passed between samples.
pub const CAUSTIC_DIP: f64 = 0.1;
/// Uniform samples added to the trajectory nodes when scanning an interval.
const SCAN_SAMPLES: usize = 64;

/// `∫ₛᵗ (⟨P, Ẋ⟩ − 𝔥) dτ` along a moment trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionValue {
    pub value: f64,
    pub s: f64,
    pub t: f64,
}

/// The action accumulates on the trajectory's own adaptive mesh, as part of
/// the moment system, so this only reads it off.
pub fn action_integral(
    model: &QuadraticModel,
    kappa_tilde: f64,
    trajectory: &MomentTrajectory,
    s: f64,
    t: f64,
) -> Result<ActionValue> {
    if model.dim() != trajectory.model().dim() || kappa_tilde != trajectory.kappa_tilde() {
        return Err(GpxError::Invalid("trajectory was integrated for a different model or coupling".into()));
    }
    let value = trajectory.action(t)? - trajectory.action(s)?;
    Ok(ActionValue { value, s, t })
}

/// Means at both ends of the kernel interval.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEndpoints {
    pub p_s: DVector<f64>,
    pub x_s: DVector<f64>,
    pub p_t: DVector<f64>,
    pub x_t: DVector<f64>,
}

impl TrajectoryEndpoints {
    pub fn new(start: &MomentPoint, end: &MomentPoint) -> Self {
        TrajectoryEndpoints { p_s: start.p(), x_s: start.x(), p_t: end.p(), x_t: end.x() }
    }
}

/// `σ_min(λ₃(τ)) / (|τ|·σ_min(ℋ_pp(s)))`: close to 1 for short times and
/// zero at a conjugate point.
pub fn caustic_metric(l3: &DMatrix<f64>, tau: f64, hpp_sigma_min: f64) -> f64 {
    let sv = l3.clone().singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    smin / (tau.abs() * hpp_sigma_min)
}

fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

fn hpp(model: &QuadraticModel, t: f64) -> DMatrix<f64> {
    let n = model.dim();
    model.hzz(t).view((0, 0), (n, n)).into_owned()
}

/// Result of scanning `A(τ, r)` for conjugate points.
#[derive(Clone, Debug)]
pub struct CausticScan {
    /// Sample times (excluding `r`) in scan order with their metric values.
    pub samples: Vec<(f64, f64)>,
    /// First sample at which the interval `(r, τ]` stops being caustic-free.
    pub first_caustic: Option<f64>,
}

/// Scans `τ ∈ (r, end]` along a trajectory launched at `r`.
pub fn scan_caustics(trajectory: &MomentTrajectory, end: f64, extra_samples: usize) -> Result<CausticScan> {
    let r = trajectory.s();
    let model = trajectory.model();
    let n = model.dim();
    let h0 = hpp(model, r);
    let h0_smin = sigma_min(&h0);
    let h0_det = h0.determinant();
    let mut times: Vec<f64> = trajectory
        .nodes()
        .into_iter()
        .filter(|&u| u != r && (u - r) * (end - r) > 0.0 && (u - r).abs() <= (end - r).abs())
        .collect();
    let k = extra_samples.max(1);
    times.extend((1..=k).map(|i| r + (end - r) * i as f64 / k as f64));
    times.sort_by(|a, b| ((a - r).abs()).total_cmp(&(b - r).abs()));
    times.dedup();

    let mut samples = Vec::with_capacity(times.len());
    let mut first_caustic = None;
    // Short-time sign of det λ₃ ≈ det(−τ ℋ_pp).
    let expected_sign = ((-(end - r)).signum().powi(n as i32) * h0_det).signum();
    for &u in &times {
        let l3 = trajectory.matriciant(u)?.blocks().l3;
        let tau = u - r;
        let metric = caustic_metric(&l3, tau, h0_smin);
        let det = l3.determinant();
        let endpoint_ok = det.abs() > CAUSTIC_TOL * tau.abs().powi(n as i32) * h0_det.abs();
        let sign_ok = det.signum() == expected_sign;
        samples.push((u, metric));
        let dip = samples.len() >= 3 && {
            let m = samples.len();
            let (a, b, c) = (samples[m - 3].1, samples[m - 2].1, samples[m - 1].1);
            b < a && b < c && b < CAUSTIC_DIP
        };
        if first_caustic.is_none() && (!endpoint_ok || !sign_ok || metric < CAUSTIC_METRIC_FLOOR || dip) {
            first_caustic = Some(if dip { samples[samples.len() - 2].0 } else { u });
        }
    }
    Ok(CausticScan { samples, first_caustic })
}

/// Everything needed to evaluate `G(x, y; t, s)`.
#[derive(Clone, Debug)]
pub struct KernelContext {
    n: usize,
    hbar: f64,
    s: f64,
    t: f64,
    kappa_tilde: f64,
    start: MomentPoint,
    end: MomentPoint,
    blocks: Blocks,
    action: f64,
    c: DMatrix<f64>,
    qy: DMatrix<f64>,
    qx: DMatrix<f64>,
    det_arg: f64,
    prefactor: Complex64,
}

impl KernelContext {
    /// Integrates the moment system from `g_s` at `s` to `t` and assembles
    /// the kernel.
    pub fn build(
        model: &QuadraticModel,
        kappa_tilde: f64,
        g_s: &MomentPoint,
        s: f64,
        t: f64,
        tol: &Tolerance,
    ) -> Result<Self> {
        let traj = integrate_hes(model, kappa_tilde, g_s, s, t, tol)?;
        KernelContext::from_trajectory(&traj, t)
    }

    /// Kernel from the trajectory's launch time to `t`.
    pub fn from_trajectory(trajectory: &MomentTrajectory, t: f64) -> Result<Self> {
        let s = trajectory.s();
        let model = trajectory.model();
        let n = model.dim();
        if t == s {
            return Err(GpxError::Caustic { t, det: 0.0 });
        }
        let scan = scan_caustics(trajectory, t, SCAN_SAMPLES)?;
        let a = trajectory.matriciant(t)?;
        let blocks = a.blocks();
        let det_l3 = blocks.l3.determinant();
        if let Some(tc) = scan.first_caustic {
            log::debug!("conjugate point near t = {tc} on [{s}, {t}]");
            return Err(GpxError::Caustic { t: tc, det: det_l3 });
        }
        let c = blocks
            .l3
            .clone()
            .try_inverse()
            .ok_or(GpxError::Caustic { t, det: det_l3 })?;
        let qy = exact_symmetric(&(&blocks.l1 * &c));
        let qx = exact_symmetric(&(&c * &blocks.l4));

        // arg det(−2πiħλ₃) from the short-time form 2πiħτℋ_pp(s).
        let tau = t - s;
        let h0 = exact_symmetric(&hpp(model, s));
        let det_arg: f64 = h0
            .symmetric_eigenvalues()
            .iter()
            .map(|nu| 0.5 * PI * (tau * nu).signum())
            .sum();
        let hbar = model.hbar();
        let det_abs = (2.0 * PI * hbar).powi(n as i32) * det_l3.abs();
        let prefactor = Complex64::from_polar(det_abs.powf(-0.5), -0.5 * det_arg);

        let start = trajectory.initial().clone();
        let end = trajectory.at(t)?;
        Ok(KernelContext {
            n,
            hbar,
            s,
            t,
            kappa_tilde: trajectory.kappa_tilde(),
            start,
            end,
            blocks,
            action: trajectory.action(t)?,
            c,
            qy,
            qx,
            det_arg,
            prefactor,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn kappa_tilde(&self) -> f64 {
        self.kappa_tilde
    }

    pub fn start(&self) -> &MomentPoint {
        &self.start
    }

    pub fn end(&self) -> &MomentPoint {
        &self.end
    }

    pub fn endpoints(&self) -> TrajectoryEndpoints {
        TrajectoryEndpoints::new(&self.start, &self.end)
    }

    pub fn blocks(&self) -> &Blocks {
        &self.blocks
    }

    /// `S(t) − S(s)`.
    pub fn action(&self) -> f64 {
        self.action
    }

    /// `λ₃⁻¹`, the cross-term matrix.
    pub fn cross(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// `λ₁λ₃⁻¹` (symmetric).
    pub fn q_in(&self) -> &DMatrix<f64> {
        &self.qy
    }

    /// `λ₃⁻¹λ₄` (symmetric).
    pub fn q_out(&self) -> &DMatrix<f64> {
        &self.qx
    }

    /// Branch-tracked `det(−2πiħλ₃)^{−1/2}`.
    pub fn prefactor(&self) -> Complex64 {
        self.prefactor
    }

    /// `det(−2πiħλ₃)` with the argument carried from the short-time limit.
    pub fn prefactor_determinant(&self) -> Complex64 {
        let det_abs = (2.0 * PI * self.hbar).powi(self.n as i32) * self.blocks.l3.determinant().abs();
        Complex64::from_polar(det_abs, self.det_arg)
    }

    /// `det(−2πiħλ₃)` computed directly from `λ₃`, without branch tracking.
    pub fn raw_determinant(&self) -> Complex64 {
        let m = self.blocks.l3.map(|v| Complex64::new(0.0, -2.0 * PI * self.hbar) * v);
        m.determinant()
    }

    /// Phase (divided by ħ) that depends on `Δx` only.
    pub fn out_phase(&self, dx: &[f64]) -> f64 {
        let n = self.n;
        let mut ph = 0.0;
        for k in 0..n {
            ph += self.end.z[k] * dx[k];
            for l in 0..n {
                ph -= 0.5 * dx[k] * self.qx[(k, l)] * dx[l];
            }
        }
        ph / self.hbar
    }

    /// Phase (divided by ħ) that depends on `Δy` only.
    pub fn in_phase(&self, dy: &[f64]) -> f64 {
        let n = self.n;
        let mut ph = 0.0;
        for k in 0..n {
            ph -= self.start.z[k] * dy[k];
            for l in 0..n {
                ph -= 0.5 * dy[k] * self.qy[(k, l)] * dy[l];
            }
        }
        ph / self.hbar
    }

    pub fn green_function(&self, x: &[f64], y: &[f64]) -> Complex64 {
        let n = self.n;
        let mut dx = [0.0; 3];
        let mut dy = [0.0; 3];
        for k in 0..n {
            dx[k] = x[k] - self.end.z[n + k];
            dy[k] = y[k] - self.start.z[n + k];
        }
        let mut cross = 0.0;
        for k in 0..n {
            for l in 0..n {
                cross += dx[k] * self.c[(k, l)] * dy[l];
            }
        }
        let phase = self.action / self.hbar + self.out_phase(&dx[..n]) + self.in_phase(&dy[..n]) + cross / self.hbar;
        self.prefactor * Complex64::from_polar(1.0, phase)
    }

    /// Writes `x0.., y0.., re, im` rows for all pairs of the given points.
    pub fn write_csv<W: Write>(&self, mut w: W, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<()> {
        let n = self.n;
        let mut header: Vec<String> = (0..n).map(|k| format!("x{k}")).collect();
        header.extend((0..n).map(|k| format!("y{k}")));
        header.push("re".into());
        header.push("im".into());
        writeln!(w, "{}", header.join(","))?;
        for x in xs {
            for y in ys {
                let g = self.green_function(x, y);
                let mut row: Vec<String> = x.iter().chain(y.iter()).map(|v| format!("{v:.16e}")).collect();
                row.push(format!("{:.16e}", g.re));
                row.push(format!("{:.16e}", g.im));
                writeln!(w, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

pub fn green_function(ctx: &KernelContext, x: &[f64], y: &[f64]) -> Complex64 {
    ctx.green_function(x, y)
}

/// One oscillator factor
/// `sqrt(mω/(2πiħ sin ωτ))·exp{(imω/(2ħ sin ωτ))(cos ωτ (Δx² + Δy²) − 2 cos θ ΔxΔy)}`.
fn oscillator_factor(m: f64, omega: f64, tau: f64, theta: f64, hbar: f64, dx: f64, dy: f64) -> Result<Complex64> {
    let sn = (omega * tau).sin();
    let cs = (omega * tau).cos();
    if sn.abs() < 1e-12 {
        return Err(GpxError::Caustic { t: tau, det: sn });
    }
    let pref = (Complex64::new(m * omega, 0.0) / Complex64::new(0.0, 2.0 * PI * hbar * sn)).sqrt();
    let phase = m * omega / (2.0 * hbar * sn) * (cs * (dx * dx + dy * dy) - 2.0 * theta.cos() * dx * dy);
    Ok(pref * Complex64::from_polar(1.0, phase))
}

/// Closed-form kernel of the 1D example (frequency Ω, no magnetic term).
#[allow(clippy::too_many_arguments)]
pub fn closed_form_kernel_1d(
    params: &Example1DParams,
    kappa_tilde: f64,
    hbar: f64,
    ends: &TrajectoryEndpoints,
    action: f64,
    x: f64,
    y: f64,
    t: f64,
    s: f64,
) -> Result<Complex64> {
    let omega = params.big_omega(kappa_tilde)?;
    let (dx, dy) = (x - ends.x_t[0], y - ends.x_s[0]);
    let f = oscillator_factor(params.m, omega, t - s, 0.0, hbar, dx, dy)?;
    let linear = (ends.p_t[0] * dx - ends.p_s[0] * dy + action) / hbar;
    Ok(f * Complex64::from_polar(1.0, linear))
}

/// Closed-form kernel of the 3D example: two ω₁ factors carrying the
/// magnetic rotation, one ω₂ factor, and the magnetic cross term.
#[allow(clippy::too_many_arguments)]
pub fn closed_form_kernel_3d(
    params: &Example3DParams,
    kappa_tilde: f64,
    hbar: f64,
    ends: &TrajectoryEndpoints,
    action: f64,
    x: &[f64],
    y: &[f64],
    t: f64,
    s: f64,
) -> Result<Complex64> {
    let (w1, w2) = params.frequencies(kappa_tilde)?;
    let tau = t - s;
    let theta = 0.5 * params.omega_h() * tau;
    let m = params.m;
    let dx: Vec<f64> = (0..3).map(|k| x[k] - ends.x_t[k]).collect();
    let dy: Vec<f64> = (0..3).map(|k| y[k] - ends.x_s[k]).collect();
    let f1 = oscillator_factor(m, w1, tau, theta, hbar, dx[0], dy[0])?;
    let f2 = oscillator_factor(m, w1, tau, theta, hbar, dx[1], dy[1])?;
    let f3 = oscillator_factor(m, w2, tau, 0.0, hbar, dx[2], dy[2])?;
    let magnetic = -m * w1 * theta.sin() / (w1 * tau).sin() * (dx[0] * dy[1] - dx[1] * dy[0]);
    let mut linear = action;
    for k in 0..3 {
        linear += ends.p_t[k] * dx[k] - ends.p_s[k] * dy[k];
    }
    Ok(f1 * f2 * f3 * Complex64::from_polar(1.0, (linear + magnetic) / hbar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Example1DParams;

    fn tight() -> Tolerance {
        Tolerance::new(1e-12, 1e-14)
    }

    #[test]
    fn free_propagator() {
        let (m, hbar) = (1.5, 0.7);
        let model = QuadraticModel::free(m, hbar).unwrap();
        let g0 = MomentPoint::from_1d(0.0, 0.0, 0.5, 0.0, 0.5);
        for &tau in &[0.3, 1.0, 2.5, -0.8] {
            let ctx = KernelContext::build(&model, 0.0, &g0, 1.0, 1.0 + tau, &tight()).unwrap();
            for &(x, y) in &[(0.1, -0.3), (1.2, 0.4), (-2.0, 1.7)] {
                let want = (Complex64::new(m, 0.0) / Complex64::new(0.0, 2.0 * PI * hbar * tau)).sqrt()
                    * Complex64::from_polar(1.0, m * (x - y) * (x - y) / (2.0 * hbar * tau));
                let got = ctx.green_function(&[x], &[y]);
                assert!((got - want).norm() < 1e-10 * want.norm(), "tau={tau} {got} vs {want}");
            }
        }
    }

    #[test]
    fn prefactor_squares_to_determinant() {
        let model = QuadraticModel::harmonic(1.0, 1.2, 1.0).unwrap();
        let g0 = MomentPoint::from_1d(0.2, 0.5, 0.6, 0.0, 0.6);
        for &tau in &[0.1, 1.0, 2.5, -2.0] {
            let ctx = KernelContext::build(&model, 0.0, &g0, 0.0, tau, &tight()).unwrap();
            let p = ctx.prefactor();
            let d = ctx.prefactor_determinant();
            assert!((p * p * d - 1.0).norm() < 1e-12);
            assert!((d - ctx.raw_determinant()).norm() < 1e-12 * d.norm());
        }
    }

    #[test]
    fn caustic_refused() {
        let model = QuadraticModel::harmonic(1.0, 1.0, 1.0).unwrap();
        let g0 = MomentPoint::from_1d(0.0, 0.0, 0.5, 0.0, 0.5);
        let r = KernelContext::build(&model, 0.0, &g0, 0.0, PI, &tight());
        assert!(matches!(r, Err(GpxError::Caustic { .. })));
        let r = KernelContext::build(&model, 0.0, &g0, 0.0, 4.0, &tight());
        assert!(matches!(r, Err(GpxError::Caustic { .. })));
        assert!(KernelContext::build(&model, 0.0, &g0, 0.0, 3.0, &tight()).is_ok());
    }

    #[test]
    fn hermitian_reversal() {
        let p = Example1DParams::reference();
        let model = QuadraticModel::example_1d(&p, 0.5, 1.0).unwrap();
        let g0 = MomentPoint::from_1d(0.4, 1.0, 0.8, 0.1, 0.7);
        let (s, t) = (0.3, 2.1);
        let fwd = KernelContext::build(&model, 0.5, &g0, s, t, &tight()).unwrap();
        let gt = fwd.end().clone();
        let bwd = KernelContext::build(&model, 0.5, &gt, t, s, &tight()).unwrap();
        for &(x, y) in &[(0.0, 0.0), (1.1, -0.4), (-0.7, 2.2)] {
            let a = fwd.green_function(&[x], &[y]);
            let b = bwd.green_function(&[y], &[x]).conj();
            assert!((a - b).norm() < 1e-9 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn quarter_period_has_no_diagonal_terms() {
        let p = Example1DParams { field: 0.0, ..Example1DParams::reference() };
        let kt = 0.5;
        let model = QuadraticModel::example_1d(&p, kt, 1.0).unwrap();
        let om = p.big_omega(kt).unwrap();
        let g0 = MomentPoint::from_1d(0.0, 0.0, 0.5, 0.0, 0.5);
        let ctx = KernelContext::build(&model, kt, &g0, 0.0, 0.5 * PI / om, &tight()).unwrap();
        assert!(ctx.q_in()[(0, 0)].abs() < 1e-9);
        assert!(ctx.q_out()[(0, 0)].abs() < 1e-9);
        let modulus = (om / (2.0 * PI)).sqrt();
        assert!((ctx.prefactor().norm() - modulus).abs() < 1e-10);
    }

    #[test]
    fn action_integral_reads_trajectory() {
        let model = QuadraticModel::free(1.0, 1.0).unwrap();
        let g0 = MomentPoint::from_1d(0.8, 0.0, 0.5, 0.0, 0.5);
        let tr = integrate_hes(&model, 0.0, &g0, 0.0, 3.0, &tight()).unwrap();
        let a = action_integral(&model, 0.0, &tr, 1.0, 3.0).unwrap();
        assert!((a.value - 0.64).abs() < 1e-12);
        assert!(matches!(action_integral(&model, 0.0, &tr, 1.0, 4.0), Err(GpxError::TrajectoryGap { .. })));
        let h = QuadraticModel::harmonic(1.0, 1.0, 1.0).unwrap();
        let z0 = MomentPoint::from_1d(0.0, 0.0, 0.5, 0.0, 0.5);
        let tr = integrate_hes(&h, 0.0, &z0, 0.0, 2.0, &tight()).unwrap();
        assert!(action_integral(&h, 0.0, &tr, 0.0, 2.0).unwrap().value.abs() < 1e-14);
    }

    #[test]
    fn kernel_csv_dump() {
        let model = QuadraticModel::free(1.0, 1.0).unwrap();
        let g0 = MomentPoint::from_1d(0.0, 0.0, 0.5, 0.0, 0.5);
        let ctx = KernelContext::build(&model, 0.0, &g0, 0.0, 1.0, &tight()).unwrap();
        let mut buf = Vec::new();
        ctx.write_csv(&mut buf, &[vec![0.0], vec![1.0]], &[vec![0.5]]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x0,y0,re,im");
        assert_eq!(text.lines().count(), 3);
    }
}
