//! Independent oracle: a Strang split-step Fourier integrator of the full
//! nonlocal equation, and the residual of the equation on snapshots.
//!
//! Because the interaction is quadratic, the nonlocal term reduces to a
//! quadratic potential whose coefficients depend only on the instantaneous
//! position moments of the state, so no convolution is needed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::evolution::{kappa_tilde_for, Coupling};
use crate::grid::{GridState, Spectral};
use crate::model::QuadraticModel;
use crate::moments::{moment_point_unchecked, position_moments};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub dt: f64,
    pub coupling: Coupling,
    /// Largest tolerated relative change of `‖ψ‖²` over the run.
    pub norm_drift_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { dt: 1e-4, coupling: Coupling::FromNorm, norm_drift_tol: 1e-6 }
    }
}

impl OracleConfig {
    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// Blocks of the model in the form the splitting needs, checked once.
struct Split {
    n: usize,
    kappa_tilde: f64,
    w_xx: DMatrix<f64>,
    w_xy: DMatrix<f64>,
    w_yy: DMatrix<f64>,
}

fn block(m: &DMatrix<f64>, r: usize, c: usize, n: usize) -> DMatrix<f64> {
    m.view((r, c), (n, n)).into_owned()
}

fn only_xx(m: &DMatrix<f64>, n: usize) -> bool {
    block(m, 0, 0, n).amax() == 0.0 && block(m, 0, n, n).amax() == 0.0 && block(m, n, 0, n).amax() == 0.0
}

impl Split {
    fn new(model: &QuadraticModel, kappa_tilde: f64) -> Result<Self> {
        let n = model.dim();
        for (name, w) in [("W_zz", model.wzz()), ("W_zw", model.wzw()), ("W_ww", model.www())] {
            if !only_xx(w, n) {
                return Err(GpxError::Unsupported(format!(
                    "split-step oracle needs a position-only interaction; {name} has momentum entries"
                )));
            }
        }
        Ok(Split {
            n,
            kappa_tilde,
            w_xx: block(model.wzz(), n, n, n),
            w_xy: block(model.wzw(), n, n, n),
            w_yy: block(model.www(), n, n, n),
        })
    }

    /// `(ℋ_pp, ℋ_z,p)` at `t`; fails if position and momentum are coupled.
    fn kinetic(&self, model: &QuadraticModel, t: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.n;
        let h = model.hzz(t);
        if block(&h, 0, n, n).amax() != 0.0 {
            return Err(GpxError::Unsupported(
                "split-step oracle needs a Hamiltonian without position-momentum coupling".into(),
            ));
        }
        Ok((block(&h, 0, 0, n), model.hz(t).rows(0, n).into_owned()))
    }

    /// `V_eff(x) = ½⟨x, Ax⟩ + ⟨b, x⟩ + c` at `t` for the given position moments.
    fn potential(
        &self,
        model: &QuadraticModel,
        t: f64,
        mean: &DVector<f64>,
        sxx: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, f64) {
        let n = self.n;
        let k = self.kappa_tilde;
        let h = model.hzz(t);
        let a = block(&h, n, n, n) + &self.w_xx * k;
        let b = model.hz(t).rows(n, n).into_owned() + (&self.w_xy * mean) * k;
        let second = sxx + mean * mean.transpose();
        let c = 0.5 * k * (&self.w_yy * second).trace();
        (a, b, c)
    }
}

fn kinetic_table(spectral: &Spectral, hpp: &DMatrix<f64>, hz_p: &DVector<f64>, hbar: f64, tau: f64) -> Vec<Complex64> {
    let n = hpp.nrows();
    spectral.tabulate(|k| {
        let mut e = 0.0;
        for i in 0..n {
            e += hbar * hz_p[i] * k[i];
            for j in 0..n {
                e += 0.5 * hbar * hbar * k[i] * hpp[(i, j)] * k[j];
            }
        }
        Complex64::from_polar(1.0, -e * tau / hbar)
    })
}

fn apply_table(spectral: &Spectral, data: &mut [Complex64], table: &[Complex64]) {
    spectral.forward(data);
    data.iter_mut().zip(table).for_each(|(v, m)| *v *= m);
    spectral.inverse(data);
}

/// Propagates `ψ` from `s = ψ.t` to `t` by Strang splitting on the grid of
/// `ψ`, which is treated as periodic.
pub fn split_step_evolve(model: &QuadraticModel, psi: &GridState, t: f64, cfg: &OracleConfig) -> Result<GridState> {
    if psi.dim() != model.dim() {
        return Err(GpxError::DimensionMismatch(format!(
            "state of dimension {} for a model of dimension {}",
            psi.dim(),
            model.dim()
        )));
    }
    if !(cfg.dt > 0.0) {
        return Err(GpxError::Invalid(format!("oracle time step must be positive, got {}", cfg.dt)));
    }
    let s = psi.t;
    let mut out = psi.clone();
    if t == s {
        return Ok(out);
    }
    let steps = ((t - s).abs() / cfg.dt).ceil().max(1.0) as usize;
    let tau = (t - s) / steps as f64;
    let hbar = psi.hbar;
    let n = psi.dim();
    let split = Split::new(model, kappa_tilde_for(model, psi, cfg.coupling))?;
    let spectral = Spectral::new(&psi.grid);
    let norm0 = psi.norm_squared();
    if norm0 == 0.0 {
        return Err(GpxError::ZeroNorm);
    }

    let (mut hpp, mut hz_p) = split.kinetic(model, s)?;
    let mut half = kinetic_table(&spectral, &hpp, &hz_p, hbar, 0.5 * tau);
    let mut full = kinetic_table(&spectral, &hpp, &hz_p, hbar, tau);
    let points: Vec<f64> = {
        let mut pts = vec![0.0; psi.grid.len() * n];
        for (i, chunk) in pts.chunks_mut(n).enumerate() {
            psi.grid.point(i, chunk);
        }
        pts
    };

    apply_table(&spectral, &mut out.data, &half);
    for step in 0..steps {
        let mid = s + (step as f64 + 0.5) * tau;
        let (_, mean, sxx) = position_moments(&out)?;
        let (a, b, c) = split.potential(model, mid, &mean, &sxx);
        let mut v_max: f64 = 0.0;
        for (v, x) in out.data.iter_mut().zip(points.chunks(n)) {
            let mut e = c;
            for i in 0..n {
                e += b[i] * x[i];
                for j in 0..n {
                    e += 0.5 * x[i] * a[(i, j)] * x[j];
                }
            }
            v_max = v_max.max(e.abs());
            *v *= Complex64::from_polar(1.0, -e * tau / hbar);
        }
        if v_max * tau.abs() / hbar >= 0.5 {
            return Err(GpxError::Instability(format!(
                "potential phase step {:.3} exceeds 0.5 at t = {mid}; reduce dt",
                v_max * tau.abs() / hbar
            )));
        }
        let next = s + (step + 1) as f64 * tau;
        let (hpp_next, hz_next) = split.kinetic(model, next)?;
        if hpp_next != hpp || hz_next != hz_p {
            // a time-dependent kinetic part: split the kick at the step boundary
            apply_table(&spectral, &mut out.data, &half);
            hpp = hpp_next;
            hz_p = hz_next;
            half = kinetic_table(&spectral, &hpp, &hz_p, hbar, 0.5 * tau);
            full = kinetic_table(&spectral, &hpp, &hz_p, hbar, tau);
            if step + 1 < steps {
                apply_table(&spectral, &mut out.data, &half);
            }
        } else if step + 1 < steps {
            apply_table(&spectral, &mut out.data, &full);
        } else {
            apply_table(&spectral, &mut out.data, &half);
        }
    }
    let drift = (out.norm_squared() - norm0).abs() / norm0;
    if drift > cfg.norm_drift_tol {
        return Err(GpxError::Instability(format!("norm drift {drift:e} over the run")));
    }
    out.t = t;
    Ok(out)
}

/// `ĥ(t, Ψ)Ψ`: the Weyl-quantized associated Hamiltonian with the nonlocal
/// term reduced through the moments of `Ψ`.
pub fn apply_hamiltonian(model: &QuadraticModel, psi: &GridState, kappa_tilde: f64) -> Result<Vec<Complex64>> {
    let n = psi.dim();
    let hbar = psi.hbar;
    let spectral = Spectral::new(&psi.grid);
    let g = moment_point_unchecked(psi, &spectral)?;
    let t = psi.t;
    let h = model.effective_hessian(kappa_tilde, t);
    let lin = model.hz(t) + (model.wzw() * &g.z) * kappa_tilde;
    let second = &g.delta + &g.z * g.z.transpose();
    let constant = 0.5 * kappa_tilde * (model.www() * second).trace();

    let mut xs = vec![0.0; psi.grid.len() * n];
    for (i, chunk) in xs.chunks_mut(n).enumerate() {
        psi.grid.point(i, chunk);
    }
    let times_x = |data: &[Complex64], j: usize| -> Vec<Complex64> {
        data.iter().zip(xs.chunks(n)).map(|(v, x)| v * x[j]).collect()
    };
    let p_psi: Vec<Vec<Complex64>> = (0..n).map(|k| spectral.momentum(&psi.data, k, hbar)).collect();

    let mut out: Vec<Complex64> = psi.data.iter().map(|v| v * constant).collect();
    let add = |out: &mut Vec<Complex64>, term: &[Complex64], c: f64| {
        if c != 0.0 {
            out.iter_mut().zip(term).for_each(|(o, v)| *o += v * c);
        }
    };
    for i in 0..n {
        add(&mut out, &p_psi[i], lin[i]);
        add(&mut out, &times_x(&psi.data, i), lin[n + i]);
        for j in 0..n {
            if h[(i, j)] != 0.0 {
                add(&mut out, &spectral.momentum(&p_psi[j], i, hbar), 0.5 * h[(i, j)]);
            }
            if h[(n + i, n + j)] != 0.0 {
                add(&mut out, &times_x(&times_x(&psi.data, j), i), 0.5 * h[(n + i, n + j)]);
            }
            if h[(i, n + j)] != 0.0 {
                // Weyl order: ½(p̂ᵢx̂ⱼ + x̂ⱼp̂ᵢ)
                let px = spectral.momentum(&times_x(&psi.data, j), i, hbar);
                let xp = times_x(&p_psi[i], j);
                add(&mut out, &px, 0.5 * h[(i, n + j)]);
                add(&mut out, &xp, 0.5 * h[(i, n + j)]);
            }
        }
    }
    Ok(out)
}

/// `‖(−iħ∂_t + ĥ(t, Ψ))Ψ‖` at the middle of three snapshots spaced by `dt`,
/// with the time derivative by central difference.
pub fn gpe_residual(
    model: &QuadraticModel,
    snapshots: [&GridState; 3],
    dt: f64,
    coupling: Coupling,
) -> Result<f64> {
    let [a, b, c] = snapshots;
    if !a.grid.same_as(&b.grid) || !b.grid.same_as(&c.grid) {
        return Err(GpxError::GridMismatch("residual snapshots must share one grid".into()));
    }
    let kappa_tilde = kappa_tilde_for(model, b, coupling);
    let hpsi = apply_hamiltonian(model, b, kappa_tilde)?;
    let scale = Complex64::new(0.0, -b.hbar / (2.0 * dt));
    let dv = b.grid.cell_volume();
    let sum: f64 = hpsi
        .iter()
        .zip(a.data.iter().zip(&c.data))
        .map(|(h, (m, p))| (scale * (p - m) + h).norm_sqr())
        .sum();
    Ok((sum * dv).sqrt())
}
