//! Hamilton–Ehrenfest system for first and second moments, the system in
//! variations, and the classical action carried along the trajectory.
//!
//! The moments, the matriciant and the action are integrated together as one
//! augmented ODE, so every quantity the kernel needs is sampled on the same
//! adaptive mesh. The state vector is laid out as
//! `[z (2n) | Δ (4n², column-major) | S (1) | A (4n², column-major)]`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{GpxError, Result};
use crate::model::{exact_symmetric, QuadraticModel};
use crate::ode::{self, DenseSolution, OdeOptions, Tolerance};

pub use crate::model::symplectic_j;

/// Phase-space mean `z = (⟨p̂⟩, ⟨x̂⟩)` and the Weyl-symmetrized centered second
/// moments `Δ = [[σ_pp, σ_px], [σ_xp, σ_xx]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentPoint {
    pub z: DVector<f64>,
    pub delta: DMatrix<f64>,
}

impl MomentPoint {
    pub fn new(z: DVector<f64>, delta: DMatrix<f64>) -> Result<Self> {
        let n2 = z.len();
        if n2 == 0 || !n2.is_multiple_of(2) || delta.nrows() != n2 || delta.ncols() != n2 {
            return Err(GpxError::DimensionMismatch(format!(
                "moment point with |z| = {n2} and Δ {}x{}",
                delta.nrows(),
                delta.ncols()
            )));
        }
        let dev = (&delta - delta.transpose()).amax();
        if dev > 1e-12 * delta.amax().max(1.0) {
            return Err(GpxError::Asymmetric { name: "Delta".into(), deviation: dev });
        }
        Ok(MomentPoint { z, delta: exact_symmetric(&delta) })
    }

    /// 1D convenience constructor.
    pub fn from_1d(p: f64, x: f64, sigma_pp: f64, sigma_px: f64, sigma_xx: f64) -> Self {
        MomentPoint {
            z: DVector::from_column_slice(&[p, x]),
            delta: DMatrix::from_row_slice(2, 2, &[sigma_pp, sigma_px, sigma_px, sigma_xx]),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len() / 2
    }

    pub fn p(&self) -> DVector<f64> {
        self.z.rows(0, self.dim()).into_owned()
    }

    pub fn x(&self) -> DVector<f64> {
        let n = self.dim();
        self.z.rows(n, n).into_owned()
    }

    pub fn sigma_pp(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.delta.view((0, 0), (n, n)).into_owned()
    }

    pub fn sigma_px(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.delta.view((0, n), (n, n)).into_owned()
    }

    pub fn sigma_xx(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.delta.view((n, n), (n, n)).into_owned()
    }

    /// Largest componentwise deviation from another point.
    pub fn max_deviation(&self, other: &MomentPoint) -> f64 {
        (&self.z - &other.z).amax().max((&self.delta - &other.delta).amax())
    }
}

/// Fundamental solution `A(t, s)` of `Ȧ = J 𝔥_zz(t) A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matriciant {
    pub a: DMatrix<f64>,
    pub t: f64,
    pub s: f64,
}

/// Blocks of `A = [[λ₄ᵀ, −λ₂ᵀ], [−λ₃ᵀ, λ₁ᵀ]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Blocks {
    pub l1: DMatrix<f64>,
    pub l2: DMatrix<f64>,
    pub l3: DMatrix<f64>,
    pub l4: DMatrix<f64>,
}

impl Blocks {
    pub fn assemble(&self) -> DMatrix<f64> {
        let n = self.l1.nrows();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.l4.transpose());
        a.view_mut((0, n), (n, n)).copy_from(&(-self.l2.transpose()));
        a.view_mut((n, 0), (n, n)).copy_from(&(-self.l3.transpose()));
        a.view_mut((n, n), (n, n)).copy_from(&self.l1.transpose());
        a
    }
}

pub fn matriciant_blocks(m: &Matriciant) -> Blocks {
    let n = m.a.nrows() / 2;
    let a = &m.a;
    Blocks {
        l4: a.view((0, 0), (n, n)).transpose(),
        l2: -a.view((0, n), (n, n)).transpose(),
        l3: -a.view((n, 0), (n, n)).transpose(),
        l1: a.view((n, n), (n, n)).transpose(),
    }
}

impl Matriciant {
    pub fn identity(n: usize, s: f64) -> Self {
        Matriciant { a: DMatrix::identity(2 * n, 2 * n), t: s, s }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows() / 2
    }

    pub fn blocks(&self) -> Blocks {
        matriciant_blocks(self)
    }

    /// `max |AᵀJA − J|`.
    pub fn symplectic_defect(&self) -> f64 {
        let j = symplectic_j(self.dim());
        (self.a.transpose() * &j * &self.a - j).amax()
    }

    /// `A(t, r)·A(r, s) = A(t, s)` for `self = A(t, r)`, `earlier = A(r, s)`.
    pub fn compose(&self, earlier: &Matriciant) -> Matriciant {
        Matriciant { a: &self.a * &earlier.a, t: self.t, s: earlier.s }
    }

    /// `A(s, t)`, using `A⁻¹ = −J Aᵀ J`.
    pub fn inverse(&self) -> Matriciant {
        let j = symplectic_j(self.dim());
        Matriciant { a: -(&j * self.a.transpose() * &j), t: self.s, s: self.t }
    }

    /// Transports second moments: `A Δ Aᵀ`.
    pub fn transport(&self, delta: &DMatrix<f64>) -> DMatrix<f64> {
        exact_symmetric(&(&self.a * delta * self.a.transpose()))
    }
}

struct Layout {
    n: usize,
    with_matriciant: bool,
}

impl Layout {
    fn n2(&self) -> usize {
        2 * self.n
    }
    fn delta(&self) -> usize {
        self.n2()
    }
    fn action(&self) -> usize {
        self.n2() + self.n2() * self.n2()
    }
    fn matriciant(&self) -> usize {
        self.action() + 1
    }
    fn len(&self) -> usize {
        self.matriciant() + if self.with_matriciant { self.n2() * self.n2() } else { 0 }
    }
}

/// Right-hand side of the augmented moment system.
struct HesRhs<'a> {
    model: &'a QuadraticModel,
    kappa_tilde: f64,
    layout: Layout,
    w_first: DMatrix<f64>,
    w_energy: DMatrix<f64>,
    www: DMatrix<f64>,
}

impl<'a> HesRhs<'a> {
    fn new(model: &'a QuadraticModel, kappa_tilde: f64, with_matriciant: bool) -> Self {
        let n = model.dim();
        HesRhs {
            model,
            kappa_tilde,
            layout: Layout { n, with_matriciant },
            w_first: (model.wzz() + model.wzw()) * kappa_tilde,
            w_energy: (model.wzz() + model.wzw() * 2.0 + model.www()) * kappa_tilde,
            www: model.www().clone(),
        }
    }

    fn eval(&self, t: f64, y: &[f64], f: &mut [f64]) {
        let n = self.layout.n;
        let n2 = self.layout.n2();
        let hzz = self.model.hzz(t);
        let hz = self.model.hz(t);
        let z = DVector::from_column_slice(&y[..n2]);
        let delta = DMatrix::from_column_slice(n2, n2, &y[self.layout.delta()..self.layout.action()]);

        // ż = J (ℋ_z + (ℋ_zz + κ̃(W_zz + W_zw)) z)
        let grad = &hz + (&hzz + &self.w_first) * &z;
        for i in 0..n {
            f[i] = -grad[n + i];
            f[n + i] = grad[i];
        }

        // Δ̇ = X + Xᵀ with X = J 𝔥_zz Δ
        let h = &hzz + self.model.wzz() * self.kappa_tilde;
        let hd = &h * &delta;
        let off = self.layout.delta();
        for c in 0..n2 {
            for r in 0..n2 {
                let x_rc = j_row(n, &hd, r, c);
                let x_cr = j_row(n, &hd, c, r);
                f[off + c * n2 + r] = x_rc + x_cr;
            }
        }

        // Ṡ = ⟨P, Ẋ⟩ − 𝔥
        let quad = &hzz + &self.w_energy;
        let energy =
            0.5 * z.dot(&(&quad * &z)) + hz.dot(&z) + 0.5 * self.kappa_tilde * (&self.www * &delta).trace();
        let mut p_xdot = 0.0;
        for i in 0..n {
            p_xdot += z[i] * f[n + i];
        }
        f[self.layout.action()] = p_xdot - energy;

        if self.layout.with_matriciant {
            let off = self.layout.matriciant();
            let a = DMatrix::from_column_slice(n2, n2, &y[off..off + n2 * n2]);
            let ha = &h * &a;
            for c in 0..n2 {
                for r in 0..n2 {
                    f[off + c * n2 + r] = j_row(n, &ha, r, c);
                }
            }
        }
    }
}

/// Entry `(r, c)` of `J·M`.
#[inline]
fn j_row(n: usize, m: &DMatrix<f64>, r: usize, c: usize) -> f64 {
    if r < n {
        -m[(r + n, c)]
    } else {
        m[(r - n, c)]
    }
}

/// Restores bitwise symmetry of the Δ block after a step.
fn symmetrize_delta(layout: &Layout, y: &mut [f64]) {
    let n2 = layout.n2();
    let off = layout.delta();
    for c in 0..n2 {
        for r in (c + 1)..n2 {
            let v = 0.5 * (y[off + c * n2 + r] + y[off + r * n2 + c]);
            y[off + c * n2 + r] = v;
            y[off + r * n2 + c] = v;
        }
    }
}

/// Dense solution of the moment system launched from `𝔤(s) = g0`, together
/// with the matriciant `A(τ, s)` and the action `S(τ) − S(s)`.
#[derive(Clone, Debug)]
pub struct MomentTrajectory {
    model: QuadraticModel,
    kappa_tilde: f64,
    initial: MomentPoint,
    sol: DenseSolution,
}

impl MomentTrajectory {
    pub fn s(&self) -> f64 {
        self.sol.t_start()
    }

    pub fn t(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn kappa_tilde(&self) -> f64 {
        self.kappa_tilde
    }

    pub fn model(&self) -> &QuadraticModel {
        &self.model
    }

    /// The constants record: the moment point at the launch time.
    pub fn initial(&self) -> &MomentPoint {
        &self.initial
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.sol.nodes()
    }

    pub fn contains(&self, tau: f64) -> bool {
        self.sol.contains(tau)
    }

    fn layout(&self) -> Layout {
        Layout { n: self.model.dim(), with_matriciant: true }
    }

    fn state(&self, tau: f64) -> Result<Vec<f64>> {
        self.sol.eval(tau)
    }

    pub fn at(&self, tau: f64) -> Result<MomentPoint> {
        let y = self.state(tau)?;
        Ok(self.point_from(&y))
    }

    pub fn end(&self) -> MomentPoint {
        self.point_from(self.sol.y_end())
    }

    fn point_from(&self, y: &[f64]) -> MomentPoint {
        let l = self.layout();
        let n2 = l.n2();
        let delta = DMatrix::from_column_slice(n2, n2, &y[l.delta()..l.action()]);
        MomentPoint { z: DVector::from_column_slice(&y[..n2]), delta: exact_symmetric(&delta) }
    }

    /// `S(τ) − S(s)` along this trajectory.
    pub fn action(&self, tau: f64) -> Result<f64> {
        let y = self.state(tau)?;
        Ok(y[self.layout().action()])
    }

    /// `A(τ, s)`.
    pub fn matriciant(&self, tau: f64) -> Result<Matriciant> {
        let y = self.state(tau)?;
        Ok(self.matriciant_from(&y, tau))
    }

    fn matriciant_from(&self, y: &[f64], tau: f64) -> Matriciant {
        let l = self.layout();
        let n2 = l.n2();
        let off = l.matriciant();
        Matriciant { a: DMatrix::from_column_slice(n2, n2, &y[off..off + n2 * n2]), t: tau, s: self.s() }
    }

    /// Largest componentwise mismatch between the interpolant's derivative
    /// and the moment-system right-hand side at `τ`, relative to the size of
    /// the right-hand side.
    pub fn residual_at(&self, tau: f64) -> Result<f64> {
        let y = self.state(tau)?;
        let l = self.layout();
        let dy = self.sol.eval_derivative(tau)?;
        let rhs = HesRhs::new(&self.model, self.kappa_tilde, true);
        let mut f = vec![0.0; l.len()];
        rhs.eval(tau, &y, &mut f);
        let scale = f[..l.action()].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = (0..l.action()).map(|i| (dy[i] - f[i]).abs()).fold(0.0, f64::max);
        Ok(err / scale)
    }

    /// Writes `t, z0.., d_i_j (i ≤ j)` rows at the given sample times.
    pub fn write_csv<W: Write>(&self, mut w: W, times: &[f64]) -> Result<()> {
        let n2 = 2 * self.model.dim();
        write_moments_header(&mut w, n2)?;
        for &tau in times {
            write_moments_row(&mut w, tau, &self.at(tau)?)?;
        }
        Ok(())
    }
}

pub fn write_moments_header<W: Write>(w: &mut W, n2: usize) -> Result<()> {
    let mut cols = vec!["t".to_string()];
    cols.extend((0..n2).map(|i| format!("z{i}")));
    for i in 0..n2 {
        for j in i..n2 {
            cols.push(format!("d{i}_{j}"));
        }
    }
    writeln!(w, "{}", cols.join(","))?;
    Ok(())
}

pub fn write_moments_row<W: Write>(w: &mut W, t: f64, g: &MomentPoint) -> Result<()> {
    let n2 = g.z.len();
    let mut vals = vec![format!("{t:.16e}")];
    vals.extend(g.z.iter().map(|v| format!("{v:.16e}")));
    for i in 0..n2 {
        for j in i..n2 {
            vals.push(format!("{:.16e}", g.delta[(i, j)]));
        }
    }
    writeln!(w, "{}", vals.join(","))?;
    Ok(())
}

fn check_inputs(model: &QuadraticModel, g0: &MomentPoint, tol: &Tolerance) -> Result<()> {
    if g0.dim() != model.dim() {
        return Err(GpxError::DimensionMismatch(format!(
            "moment point of dimension {} for a model of dimension {}",
            g0.dim(),
            model.dim()
        )));
    }
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(GpxError::Invalid("tolerances must be positive".into()));
    }
    if g0.z.iter().chain(g0.delta.iter()).any(|v| !v.is_finite()) {
        return Err(GpxError::Invalid("non-finite initial moments".into()));
    }
    Ok(())
}

fn check_examples(model: &QuadraticModel, kappa_tilde: f64) -> Result<()> {
    if let Ok(p) = model.example_1d_params() {
        p.big_omega(kappa_tilde)?;
    }
    if let Ok(p) = model.example_3d_params() {
        p.frequencies(kappa_tilde)?;
    }
    Ok(())
}

/// Integrates the moment system (with matriciant and action) from `s` to `t`.
pub fn integrate_hes(
    model: &QuadraticModel,
    kappa_tilde: f64,
    g0: &MomentPoint,
    s: f64,
    t: f64,
    tol: &Tolerance,
) -> Result<MomentTrajectory> {
    integrate_hes_with(model, kappa_tilde, g0, s, t, tol, &OdeOptions::default())
}

pub fn integrate_hes_with(
    model: &QuadraticModel,
    kappa_tilde: f64,
    g0: &MomentPoint,
    s: f64,
    t: f64,
    tol: &Tolerance,
    opts: &OdeOptions,
) -> Result<MomentTrajectory> {
    check_inputs(model, g0, tol)?;
    check_examples(model, kappa_tilde)?;
    let rhs = HesRhs::new(model, kappa_tilde, true);
    let l = Layout { n: model.dim(), with_matriciant: true };
    let n2 = l.n2();
    let mut y0 = vec![0.0; l.len()];
    y0[..n2].copy_from_slice(g0.z.as_slice());
    y0[l.delta()..l.action()].copy_from_slice(exact_symmetric(&g0.delta).as_slice());
    for i in 0..n2 {
        y0[l.matriciant() + i * n2 + i] = 1.0;
    }
    let sol = ode::integrate_with_hook(
        |tau, y, f| rhs.eval(tau, y, f),
        s,
        &y0,
        t,
        tol,
        opts,
        |_, y| symmetrize_delta(&l, y),
    )?;
    Ok(MomentTrajectory { model: model.clone(), kappa_tilde, initial: g0.clone(), sol })
}

/// Integrates the system in variations alone, returning `A(t, s)`.
pub fn integrate_variations(
    model: &QuadraticModel,
    kappa_tilde: f64,
    s: f64,
    t: f64,
    tol: &Tolerance,
) -> Result<Matriciant> {
    let n = model.dim();
    let n2 = 2 * n;
    if t == s {
        return Ok(Matriciant::identity(n, s));
    }
    let wk = model.wzz() * kappa_tilde;
    let mut y0 = vec![0.0; n2 * n2];
    for i in 0..n2 {
        y0[i * n2 + i] = 1.0;
    }
    let sol = ode::integrate(
        |tau, y, f| {
            let a = DMatrix::from_column_slice(n2, n2, y);
            let ha = (model.hzz(tau) + &wk) * a;
            for c in 0..n2 {
                for r in 0..n2 {
                    f[c * n2 + r] = j_row(n, &ha, r, c);
                }
            }
        },
        s,
        &y0,
        t,
        tol,
        &OdeOptions::default(),
    )?;
    Ok(Matriciant { a: DMatrix::from_column_slice(n2, n2, sol.y_end()), t, s })
}
