//! Symmetry operators obtained by conjugating a linear operator with the
//! evolution operator, `Φ = U(t, â·U⁻¹(t, Ψ))`, and the Fock hierarchy of the
//! driven 1D oscillator that the ladder pair generates.
//!
//! The intertwined operators act on the state at the base time. Because the
//! evolution operator depends on the state through its moments, the moments
//! of `â·U⁻¹Ψ` are recomputed before it is propagated forward again. The
//! effective coupling is held at the value of the input solution, so that
//! non-normalized intermediate images (`â⁺Ψₙ` has norm `√(n+1)`) still
//! belong to the same equation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::evolution::{evolve, kappa_tilde_for, Coupling, EvolveOptions, OutputGrid};
use crate::grid::{Grid, GridState, Spectral};
use crate::model::{Example1DParams, QuadraticModel};
use crate::moments::moment_point;

/// An image `â·φ` whose norm is below this fraction of `‖φ‖` is the zero state.
pub const ZERO_IMAGE_TOL: f64 = 1e-10;

/// Phase-space point `(p₀, x₀)` the operator is centered on.
#[derive(Clone, Debug, PartialEq)]
pub enum Center {
    Fixed { p: Vec<f64>, x: Vec<f64> },
    /// First moments of the state the operator acts on.
    FromState,
}

/// `â = c + ⟨a, Δx̂⟩ + ⟨b, Δp̂⟩ + ½⟨Δx̂, M_xx Δx̂⟩ + ⟨Δx̂, M_xp Δp̂⟩ + ½⟨Δp̂, M_pp Δp̂⟩`
/// with `Δx̂ = x − x₀`, `Δp̂ = −iħ∇ − p₀`. In the mixed term every `Δx̂`
/// stands to the left of every `Δp̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwinedOperator {
    pub constant: Complex64,
    pub lin_x: Vec<Complex64>,
    pub lin_p: Vec<Complex64>,
    pub quad_xx: Option<DMatrix<Complex64>>,
    pub quad_xp: Option<DMatrix<Complex64>>,
    pub quad_pp: Option<DMatrix<Complex64>>,
    pub center: Center,
}

/// Direction of a ladder step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Raise,
    Lower,
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

impl IntertwinedOperator {
    pub fn identity(n: usize) -> Self {
        Self::scalar(n, Complex64::new(1.0, 0.0))
    }

    pub fn scalar(n: usize, c: Complex64) -> Self {
        IntertwinedOperator {
            constant: c,
            lin_x: vec![zero(); n],
            lin_p: vec![zero(); n],
            quad_xx: None,
            quad_xp: None,
            quad_pp: None,
            center: Center::FromState,
        }
    }

    pub fn linear(constant: Complex64, lin_x: Vec<Complex64>, lin_p: Vec<Complex64>, center: Center) -> Self {
        IntertwinedOperator { constant, lin_x, lin_p, quad_xx: None, quad_xp: None, quad_pp: None, center }
    }

    /// `â = (Δp̂ − imΩΔx̂)/√(2ħmΩ)` and `â⁺ = (Δp̂ + imΩΔx̂)/√(2ħmΩ)` in 1D.
    pub fn ladder(direction: Ladder, mass: f64, big_omega: f64, hbar: f64) -> Self {
        let norm = 1.0 / (2.0 * hbar * mass * big_omega).sqrt();
        let sign = match direction {
            Ladder::Raise => 1.0,
            Ladder::Lower => -1.0,
        };
        Self::linear(
            zero(),
            vec![Complex64::new(0.0, sign * mass * big_omega * norm)],
            vec![Complex64::new(norm, 0.0)],
            Center::FromState,
        )
    }

    pub fn with_center(mut self, center: Center) -> Self {
        self.center = center;
        self
    }

    pub fn dim(&self) -> usize {
        self.lin_x.len()
    }

    /// Polynomial degree in `(Δx̂, Δp̂)`.
    pub fn degree(&self) -> usize {
        let nonzero = |m: &Option<DMatrix<Complex64>>| m.as_ref().is_some_and(|m| m.iter().any(|v| *v != zero()));
        if nonzero(&self.quad_xx) || nonzero(&self.quad_xp) || nonzero(&self.quad_pp) {
            2
        } else if self.lin_x.iter().chain(&self.lin_p).any(|v| *v != zero()) {
            1
        } else {
            0
        }
    }

    fn check_shape(&self, n: usize) -> Result<()> {
        let square = |m: &Option<DMatrix<Complex64>>| m.as_ref().is_none_or(|m| m.nrows() == n && m.ncols() == n);
        let centered = match &self.center {
            Center::Fixed { p, x } => p.len() == n && x.len() == n,
            Center::FromState => true,
        };
        if self.lin_x.len() != n
            || self.lin_p.len() != n
            || !square(&self.quad_xx)
            || !square(&self.quad_xp)
            || !square(&self.quad_pp)
            || !centered
        {
            return Err(GpxError::DimensionMismatch(format!("operator does not act in dimension {n}")));
        }
        Ok(())
    }

    fn resolve_center(&self, state: &GridState) -> Result<(Vec<f64>, Vec<f64>)> {
        match &self.center {
            Center::Fixed { p, x } => Ok((p.clone(), x.clone())),
            Center::FromState => {
                let g = moment_point(state)?;
                Ok((g.p().iter().copied().collect(), g.x().iter().copied().collect()))
            }
        }
    }

    /// `â·φ` on the grid of `φ`.
    pub fn apply(&self, state: &GridState) -> Result<GridState> {
        let n = state.dim();
        self.check_shape(n)?;
        let (p0, x0) = self.resolve_center(state)?;
        let spectral = Spectral::new(&state.grid);
        let hbar = state.hbar;
        let dp = |data: &[Complex64], k: usize| -> Vec<Complex64> {
            let mut out = spectral.momentum(data, k, hbar);
            out.iter_mut().zip(data).for_each(|(o, v)| *o -= v * p0[k]);
            out
        };
        let dx = |data: &mut [Complex64], k: usize| {
            let mut pt = [0.0; 3];
            for (i, v) in data.iter_mut().enumerate() {
                state.grid.point(i, &mut pt[..n]);
                *v *= pt[k] - x0[k];
            }
        };
        let mut out: Vec<Complex64> = state.data.iter().map(|v| v * self.constant).collect();
        let accumulate = |out: &mut Vec<Complex64>, term: &[Complex64], c: Complex64| {
            out.iter_mut().zip(term).for_each(|(o, v)| *o += v * c);
        };
        let dp_images: Vec<Vec<Complex64>> = (0..n).map(|k| dp(&state.data, k)).collect();
        for k in 0..n {
            if self.lin_p[k] != zero() {
                accumulate(&mut out, &dp_images[k], self.lin_p[k]);
            }
            if self.lin_x[k] != zero() {
                let mut t = state.data.clone();
                dx(&mut t, k);
                accumulate(&mut out, &t, self.lin_x[k]);
            }
        }
        if let Some(m) = &self.quad_xx {
            for j in 0..n {
                for k in 0..n {
                    if m[(j, k)] != zero() {
                        let mut t = state.data.clone();
                        dx(&mut t, k);
                        dx(&mut t, j);
                        accumulate(&mut out, &t, m[(j, k)] * 0.5);
                    }
                }
            }
        }
        if let Some(m) = &self.quad_xp {
            for j in 0..n {
                for k in 0..n {
                    if m[(j, k)] != zero() {
                        let mut t = dp_images[k].clone();
                        dx(&mut t, j);
                        accumulate(&mut out, &t, m[(j, k)]);
                    }
                }
            }
        }
        if let Some(m) = &self.quad_pp {
            for j in 0..n {
                for k in 0..n {
                    if m[(j, k)] != zero() {
                        let t = dp(&dp_images[k], j);
                        accumulate(&mut out, &t, m[(j, k)] * 0.5);
                    }
                }
            }
        }
        GridState::new(state.grid.clone(), out, state.t, hbar)
    }

    /// `exp(α·b̂)·φ` for a generator of degree at most one, in closed form:
    /// `e^{α(c + ⟨a,Δx̂⟩ + ⟨b,Δp̂⟩)} = e^{α⟨a,Δx̂⟩}·e^{α⟨b,Δp̂⟩}·e^{αc − iħα²⟨a,b⟩/2}`.
    pub fn exponentiate(&self, alpha: f64, state: &GridState) -> Result<GridState> {
        let n = state.dim();
        self.check_shape(n)?;
        if self.degree() > 1 {
            return Err(GpxError::Unsupported(
                "only scalar and degree-one generators can be exponentiated".into(),
            ));
        }
        let hbar = state.hbar;
        let ab: Complex64 = self.lin_x.iter().zip(&self.lin_p).map(|(a, b)| a * b).sum();
        let scalar = (self.constant * alpha - Complex64::new(0.0, 0.5 * hbar * alpha * alpha) * ab).exp();
        let mut data = state.data.clone();
        if self.degree() == 1 {
            let (p0, x0) = self.resolve_center(state)?;
            if self.lin_p.iter().any(|v| *v != zero()) {
                let spectral = Spectral::new(&state.grid);
                let b = self.lin_p.clone();
                spectral.apply_multiplier(&mut data, |k| {
                    let e: Complex64 = (0..n).map(|d| b[d] * (hbar * k[d] - p0[d])).sum();
                    (e * alpha).exp()
                });
            }
            let mut pt = [0.0; 3];
            for (i, v) in data.iter_mut().enumerate() {
                state.grid.point(i, &mut pt[..n]);
                let e: Complex64 = (0..n).map(|d| self.lin_x[d] * (pt[d] - x0[d])).sum();
                *v *= (e * alpha).exp();
            }
        }
        data.iter_mut().for_each(|v| *v *= scalar);
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GpxError::Unresolvable(format!("exp(α·b) overflows on the grid for α = {alpha}")));
        }
        GridState::new(state.grid.clone(), data, state.t, hbar)
    }
}

/// Options of the two evolution legs with the coupling pinned to `κ̃` of the
/// input solution, backward on recentered grids and forward onto `target`.
fn legs(model: &QuadraticModel, psi: &GridState, opts: &EvolveOptions) -> (EvolveOptions, EvolveOptions) {
    let kappa_tilde = kappa_tilde_for(model, psi, opts.coupling);
    let pinned = opts.clone().with_coupling(Coupling::Fixed(kappa_tilde));
    let target = match &opts.output_grid {
        OutputGrid::Given(g) => g.clone(),
        _ => psi.grid.clone(),
    };
    let back = match opts.output_grid {
        OutputGrid::Keep => pinned.clone(),
        _ => pinned.clone().with_output_grid(OutputGrid::Recenter),
    };
    (back, pinned.with_output_grid(OutputGrid::Given(target)))
}

fn conjugate<F>(model: &QuadraticModel, psi: &GridState, s: f64, opts: &EvolveOptions, act: F) -> Result<GridState>
where
    F: FnOnce(&GridState) -> Result<GridState>,
{
    let (back_opts, fwd_opts) = legs(model, psi, opts);
    let pulled = evolve(model, psi, s, &back_opts)?;
    let image = act(&pulled)?;
    if image.norm() <= ZERO_IMAGE_TOL * pulled.norm() {
        let grid = match &fwd_opts.output_grid {
            OutputGrid::Given(g) => g.clone(),
            _ => psi.grid.clone(),
        };
        return Ok(GridState::zeros(grid, psi.t, psi.hbar));
    }
    image.check_resolved(opts.tail_tol).map_err(|e| {
        GpxError::Unresolvable(format!("operator image is not resolved on the grid at t = {s}: {e}"))
    })?;
    evolve(model, &image, psi.t, &fwd_opts)
}

/// `Φ = U(t, s, â·U⁻¹(t, s, Ψ))` with `t = Ψ.t`.
pub fn apply_symmetry(
    model: &QuadraticModel,
    a_op: &IntertwinedOperator,
    psi: &GridState,
    s: f64,
    opts: &EvolveOptions,
) -> Result<GridState> {
    conjugate(model, psi, s, opts, |phi| a_op.apply(phi))
}

/// `B(α, Ψ) = U(t, s, exp(α·b̂)·U⁻¹(t, s, Ψ))`.
pub fn one_parameter_family(
    model: &QuadraticModel,
    b_op: &IntertwinedOperator,
    alpha: f64,
    psi: &GridState,
    s: f64,
    opts: &EvolveOptions,
) -> Result<GridState> {
    if b_op.degree() > 1 {
        return Err(GpxError::Unsupported(format!(
            "generator of degree {} cannot be exponentiated in closed form",
            b_op.degree()
        )));
    }
    conjugate(model, psi, s, opts, |phi| b_op.exponentiate(alpha, phi))
}

/// Central difference `(B(ε, Ψ) − B(−ε, Ψ))/(2ε)` approximating the generator
/// of the family at `α = 0`.
pub fn family_generator(
    model: &QuadraticModel,
    b_op: &IntertwinedOperator,
    eps: f64,
    psi: &GridState,
    s: f64,
    opts: &EvolveOptions,
) -> Result<GridState> {
    let plus = one_parameter_family(model, b_op, eps, psi, s, opts)?;
    let minus = one_parameter_family(model, b_op, -eps, psi, s, opts)?;
    let c = Complex64::new(0.5 / eps, 0.0);
    GridState::linear_combination(c, &plus, -c, &minus)
}

/// Coupling of the unit-norm Fock hierarchy unless one is given explicitly.
fn hierarchy_coupling(model: &QuadraticModel, coupling: Coupling) -> f64 {
    match coupling {
        Coupling::Fixed(k) => k,
        Coupling::FromNorm => model.kappa_tilde(1.0),
    }
}

/// `Â^{(±)}Ψ = U(t, 0, â^{(±)}·U⁻¹(t, 0, Ψ))` for the 1D example, with `â`
/// centered on the first moments of the pulled-back state. `Coupling::FromNorm`
/// selects the coupling of the unit-norm hierarchy, `κ̃ = κ`.
pub fn ladder_apply(model: &QuadraticModel, direction: Ladder, psi: &GridState, opts: &EvolveOptions) -> Result<GridState> {
    let params = model.example_1d_params()?;
    let kappa_tilde = hierarchy_coupling(model, opts.coupling);
    let big_omega = params.big_omega(kappa_tilde)?;
    let op = IntertwinedOperator::ladder(direction, params.m, big_omega, model.hbar());
    let opts = opts.clone().with_coupling(Coupling::Fixed(kappa_tilde));
    apply_symmetry(model, &op, psi, 0.0, &opts)
}

/// `hₙ(ξ) = Hₙ(ξ)/√(2ⁿn!)` for `n = 0..=n_max`, by the stable recurrence
/// `h_{k+1} = √(2/(k+1))·ξ·h_k − √(k/(k+1))·h_{k−1}`.
pub fn normalized_hermite(n_max: usize, xi: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n_max + 1);
    h.push(1.0);
    if n_max >= 1 {
        h.push(std::f64::consts::SQRT_2 * xi);
    }
    for k in 1..n_max {
        let next = (2.0 / (k + 1) as f64).sqrt() * xi * h[k] - (k as f64 / (k + 1) as f64).sqrt() * h[k - 1];
        h.push(next);
    }
    h
}

/// The exact solution `Ψₙ` of the driven 1D example on its steady orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct FockSolution {
    pub n: usize,
    pub params: Example1DParams,
    pub hbar: f64,
    pub kappa_tilde: f64,
    /// Ω, the frequency of the width and of the Hermite phase.
    pub big_omega: f64,
    /// Amplitude of `X(t) = X₀ cos ωt`.
    pub amplitude: f64,
    /// `σ_xx = ħ(2n+1)/(2mΩ)`.
    pub sigma_xx: f64,
}

impl FockSolution {
    pub fn new(params: Example1DParams, kappa_tilde: f64, hbar: f64, n: usize) -> Result<Self> {
        let big_omega = params.big_omega(kappa_tilde)?;
        let amplitude = params.steady_amplitude(kappa_tilde)?;
        let sigma_xx = hbar * (2 * n + 1) as f64 / (2.0 * params.m * big_omega);
        Ok(FockSolution { n, params, hbar, kappa_tilde, big_omega, amplitude, sigma_xx })
    }

    /// The record `𝔠ₙ = (0, X₀, 0, 0, σ_xx)`.
    pub fn constants(&self) -> [f64; 5] {
        [0.0, self.amplitude, 0.0, 0.0, self.sigma_xx]
    }

    /// `(P(t), X(t))` on the steady orbit.
    pub fn center(&self, t: f64) -> (f64, f64) {
        let w = self.params.omega;
        let p = &self.params;
        (-p.m * w * self.amplitude * (w * t).sin(), self.amplitude * (w * t).cos())
    }

    fn interaction_sum(&self) -> f64 {
        self.params.k + self.kappa_tilde * (self.params.a + 2.0 * self.params.b + self.params.c)
    }

    /// Secular rate of the action, `S(t) = rate·t + periodic`.
    pub fn action_rate(&self) -> f64 {
        let p = &self.params;
        let x2 = self.amplitude * self.amplitude;
        p.m * p.omega * p.omega * x2 / 4.0 - self.interaction_sum() * x2 / 4.0 + p.e * p.field * self.amplitude / 2.0
            - self.kappa_tilde * p.c * self.sigma_xx / 2.0
    }

    /// `S(t)` with `S(0) = 0`, from `Ṡ = PẊ − 𝔥` along the steady orbit.
    pub fn action(&self, t: f64) -> f64 {
        let p = &self.params;
        let x2 = self.amplitude * self.amplitude;
        let w = p.omega;
        let periodic = -p.m * w * w * x2 / 4.0 - self.interaction_sum() * x2 / 4.0 + p.e * p.field * self.amplitude / 2.0;
        let osc = if w == 0.0 { t } else { (2.0 * w * t).sin() / (2.0 * w) };
        self.action_rate() * t + periodic * osc
    }

    /// `Ψₙ(x, t) = iⁿ/√(n!)·e^{−inΩt}·2^{−n/2}·Hₙ(√(mΩ/ħ)Δx)·Ψ₀(x, t)`.
    pub fn eval(&self, x: f64, t: f64) -> Complex64 {
        let hn = normalized_hermite(self.n, self.xi(x, t))[self.n];
        self.eval_with(hn, x, t)
    }

    fn xi(&self, x: f64, t: f64) -> f64 {
        let (_, big_x) = self.center(t);
        (self.params.m * self.big_omega / self.hbar).sqrt() * (x - big_x)
    }

    fn eval_with(&self, hn: f64, x: f64, t: f64) -> Complex64 {
        let (big_p, big_x) = self.center(t);
        let dx = x - big_x;
        let mw = self.params.m * self.big_omega;
        let amp = (mw / (std::f64::consts::PI * self.hbar)).powf(0.25) * (-mw * dx * dx / (2.0 * self.hbar)).exp() * hn;
        let phase = (self.action(t) + big_p * dx) / self.hbar
            - (self.n as f64 + 0.5) * self.big_omega * t
            + self.n as f64 * std::f64::consts::FRAC_PI_2;
        Complex64::from_polar(amp, phase)
    }

    pub fn on_grid(&self, grid: &Grid, t: f64) -> Result<GridState> {
        if grid.dim() != 1 {
            return Err(GpxError::DimensionMismatch("Fock states live on 1D grids".into()));
        }
        Ok(GridState::from_fn(grid.clone(), t, self.hbar, |x| {
            let hn = normalized_hermite(self.n, self.xi(x[0], t))[self.n];
            self.eval_with(hn, x[0], t)
        }))
    }

    /// `𝓔ₙ` of the quasi-periodic condition.
    pub fn quasi_energy(&self) -> f64 {
        self.hbar * self.big_omega * (self.n as f64 + 0.5) - self.action_rate()
    }
}

/// `Ψₙ` of the unit-norm hierarchy (`κ̃ = κ`) of a 1D example model.
pub fn fock_state(model: &QuadraticModel, n: usize) -> Result<FockSolution> {
    FockSolution::new(model.example_1d_params()?, model.kappa_tilde(1.0), model.hbar(), n)
}

/// Closed-form quasi-energy
/// `𝓔ₙ = −e²E²/(2m(Ω̃²−ω²)) − e²E²[ω² − ω₀² − ζω_nl²(a+2b+c)]/(4m(Ω̃²−ω²)²) + ħ(Ω + κ̃c/(2mΩ))(n+½)`,
/// where `ζω_nl²(a+2b+c) = κ̃(a+2b+c)/m`.
pub fn quasi_energy_with(params: &Example1DParams, kappa_tilde: f64, hbar: f64, n: usize) -> Result<f64> {
    let p = params;
    let big_omega = p.big_omega(kappa_tilde)?;
    let level = hbar * (big_omega + kappa_tilde * p.c / (2.0 * p.m * big_omega)) * (n as f64 + 0.5);
    let drive = p.e * p.field;
    if drive == 0.0 {
        return Ok(level);
    }
    let detuning = p.big_omega_tilde_sq(kappa_tilde) - p.omega * p.omega;
    if detuning.abs() < 1e-14 {
        return Err(GpxError::Resonance(format!("Omega_tilde^2 = omega^2 = {}", p.omega * p.omega)));
    }
    let shift = kappa_tilde * (p.a + 2.0 * p.b + p.c) / p.m;
    let d2 = drive * drive;
    Ok(-d2 / (2.0 * p.m * detuning)
        - d2 * (p.omega * p.omega - p.omega0_sq() - shift) / (4.0 * p.m * detuning * detuning)
        + level)
}

/// `𝓔ₙ` for the unit-norm hierarchy of a 1D example model.
pub fn quasi_energy(model: &QuadraticModel, n: usize) -> Result<f64> {
    quasi_energy_with(&model.example_1d_params()?, model.kappa_tilde(1.0), model.hbar(), n)
}
