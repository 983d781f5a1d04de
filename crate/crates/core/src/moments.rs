//! Norms and Weyl-symmetrized first and second moments of grid states.
//!
//! All means are divided by `‖ψ‖²`, so unnormalized states are accepted.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::grid::{GridState, Spectral, DEFAULT_TAIL_TOL};
use crate::hes::MomentPoint;

/// The record `𝔤₀(ψ)`: moments plus the norm and effective coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantsOfMotion {
    pub point: MomentPoint,
    pub norm_sq: f64,
    pub kappa_tilde: f64,
}

/// `‖ψ‖²` by the trapezoid rule; fails if the state reaches the boundary.
pub fn norm_squared(state: &GridState) -> Result<f64> {
    state.check_tails(DEFAULT_TAIL_TOL)?;
    Ok(state.norm_squared())
}

fn nonzero_norm(state: &GridState) -> Result<f64> {
    let ns = state.norm_squared();
    if ns == 0.0 || !ns.is_finite() {
        return Err(GpxError::ZeroNorm);
    }
    Ok(ns)
}

/// `(⟨p̂⟩, ⟨x̂⟩)`.
pub fn first_moments(state: &GridState) -> Result<DVector<f64>> {
    Ok(moment_point(state)?.z)
}

/// `Δ` about the means `z` (computed from the state when `None`).
pub fn second_moments(state: &GridState, z: Option<&DVector<f64>>) -> Result<DMatrix<f64>> {
    state.check_resolved(DEFAULT_TAIL_TOL)?;
    let spectral = Spectral::new(&state.grid);
    let momenta = momentum_images(state, &spectral);
    let ns = nonzero_norm(state)?;
    let z = match z {
        Some(z) => z.clone(),
        None => means(state, &momenta, ns),
    };
    Ok(centered(state, &momenta, &z, ns))
}

/// First and second moments together (one set of transforms).
pub fn moment_point(state: &GridState) -> Result<MomentPoint> {
    state.check_resolved(DEFAULT_TAIL_TOL)?;
    let spectral = Spectral::new(&state.grid);
    moment_point_unchecked(state, &spectral)
}

/// As [`moment_point`] without the resolution checks, reusing transforms.
pub fn moment_point_unchecked(state: &GridState, spectral: &Spectral) -> Result<MomentPoint> {
    let ns = nonzero_norm(state)?;
    let momenta = momentum_images(state, spectral);
    let z = means(state, &momenta, ns);
    let delta = centered(state, &momenta, &z, ns);
    Ok(MomentPoint { z, delta })
}

pub fn constants_of_motion(state: &GridState, kappa: f64) -> Result<ConstantsOfMotion> {
    let point = moment_point(state)?;
    let norm_sq = state.norm_squared();
    Ok(ConstantsOfMotion { point, norm_sq, kappa_tilde: kappa * norm_sq })
}

/// Norm, mean position and `σ_xx` only; needs no transforms.
pub fn position_moments(state: &GridState) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let n = state.dim();
    let ns = nonzero_norm(state)?;
    let dv = state.grid.cell_volume();
    let mut x = [0.0; 3];
    let mut mean = DVector::zeros(n);
    for (i, v) in state.data.iter().enumerate() {
        state.grid.point(i, &mut x[..n]);
        let w = v.norm_sqr();
        for k in 0..n {
            mean[k] += w * x[k];
        }
    }
    mean *= dv / ns;
    let mut sxx = DMatrix::zeros(n, n);
    for (i, v) in state.data.iter().enumerate() {
        state.grid.point(i, &mut x[..n]);
        let w = v.norm_sqr();
        for j in 0..n {
            let dj = x[j] - mean[j];
            for k in j..n {
                sxx[(j, k)] += w * dj * (x[k] - mean[k]);
            }
        }
    }
    for j in 0..n {
        for k in j..n {
            let v = sxx[(j, k)] * dv / ns;
            sxx[(j, k)] = v;
            sxx[(k, j)] = v;
        }
    }
    Ok((ns, mean, sxx))
}

fn momentum_images(state: &GridState, spectral: &Spectral) -> Vec<Vec<Complex64>> {
    (0..state.dim()).map(|k| spectral.momentum(&state.data, k, state.hbar)).collect()
}

fn means(state: &GridState, momenta: &[Vec<Complex64>], ns: f64) -> DVector<f64> {
    let n = state.dim();
    let dv = state.grid.cell_volume();
    let mut z = DVector::zeros(2 * n);
    for k in 0..n {
        let s: f64 = state.data.iter().zip(&momenta[k]).map(|(a, b)| (a.conj() * b).re).sum();
        z[k] = s * dv / ns;
    }
    let mut x = [0.0; 3];
    for (i, v) in state.data.iter().enumerate() {
        state.grid.point(i, &mut x[..n]);
        let w = v.norm_sqr();
        for k in 0..n {
            z[n + k] += w * x[k];
        }
    }
    for k in 0..n {
        z[n + k] *= dv / ns;
    }
    z
}

fn centered(state: &GridState, momenta: &[Vec<Complex64>], z: &DVector<f64>, ns: f64) -> DMatrix<f64> {
    let n = state.dim();
    let dv = state.grid.cell_volume();
    let mut d = DMatrix::<f64>::zeros(2 * n, 2 * n);
    let mut x = [0.0; 3];
    let mut dp = [Complex64::new(0.0, 0.0); 3];
    for (i, psi) in state.data.iter().enumerate() {
        state.grid.point(i, &mut x[..n]);
        for k in 0..n {
            dp[k] = momenta[k][i] - psi * z[k];
            x[k] -= z[n + k];
        }
        let w = psi.norm_sqr();
        for j in 0..n {
            for k in j..n {
                d[(j, k)] += (dp[j].conj() * dp[k]).re;
                d[(n + j, n + k)] += w * x[j] * x[k];
            }
            for k in 0..n {
                // σ_{p_k x_j} = Re ⟨ψ| Δx_j Δp_k |ψ⟩
                d[(k, n + j)] += (psi.conj() * dp[k]).re * x[j];
            }
        }
    }
    let scale = dv / ns;
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for r in 0..2 * n {
        for c in r..2 * n {
            let v = d[(r, c)] * scale;
            out[(r, c)] = v;
            out[(c, r)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn coherent(grid: Grid, x0: f64, p0: f64, width: f64) -> GridState {
        GridState::from_fn(grid, 0.0, 1.0, |x| {
            let d = x[0] - x0;
            let amp = (1.0 / (PI * width * width)).powf(0.25) * (-0.5 * d * d / (width * width)).exp();
            Complex64::from_polar(amp, p0 * x[0])
        })
    }

    fn grid_1d() -> Grid {
        Grid::cube(1, -12.0, 12.0, 2048).unwrap()
    }

    #[test]
    fn normalized_gaussian_norm() {
        let s = coherent(grid_1d(), 0.0, 0.0, 1.0);
        assert!((norm_squared(&s).unwrap() - 1.0).abs() < 1e-12);
        let s2 = s.scaled(Complex64::new(2.0, 0.0));
        assert!((norm_squared(&s2).unwrap() - 4.0).abs() < 1e-11);
    }

    #[test]
    fn hermite_gaussian_n2() {
        // (4ξ² − 2)/√(8·√π) e^{−ξ²/2} is normalized.
        let s = GridState::from_fn(grid_1d(), 0.0, 1.0, |x| {
            let xi = x[0];
            let c = 1.0 / (8.0 * PI.sqrt()).sqrt();
            Complex64::new(c * (4.0 * xi * xi - 2.0) * (-0.5 * xi * xi).exp(), 0.0)
        });
        assert!((norm_squared(&s).unwrap() - 1.0).abs() < 1e-10);
        let g = moment_point(&s).unwrap();
        // σ_xx = ħ(2n+1)/(2mΩ) with n = 2
        assert!((g.delta[(1, 1)] - 2.5).abs() < 1e-10);
        assert!((g.delta[(0, 0)] - 2.5).abs() < 1e-10);
    }

    #[test]
    fn centered_and_boosted() {
        let z = first_moments(&coherent(grid_1d(), 0.0, 0.0, 1.0)).unwrap();
        assert!(z.amax() < 1e-10);
        let z = first_moments(&coherent(grid_1d(), 1.3, 0.7, 1.0)).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-9);
        assert!((z[1] - 1.3).abs() < 1e-9);
    }

    #[test]
    fn ground_gaussian_moments() {
        // width² = ħ/(mΩ) with mΩ = 2
        let w = (0.5f64).sqrt();
        let d = second_moments(&coherent(grid_1d(), 0.0, 0.0, w), None).unwrap();
        assert!((d[(1, 1)] - 0.25).abs() < 1e-12);
        assert!((d[(0, 0)] - 1.0).abs() < 1e-10);
        assert!(d[(0, 1)].abs() < 1e-12);
        assert_eq!(d[(0, 1)].to_bits(), d[(1, 0)].to_bits());
    }

    #[test]
    fn chirp_correlation() {
        // ψ ∝ exp(−x²/2 + iβx²/2) has σ_px = ħβ⟨x²⟩ = β/2.
        let beta = 0.6;
        let s = GridState::from_fn(grid_1d(), 0.0, 1.0, |x| {
            Complex64::from_polar(PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp(), 0.5 * beta * x[0] * x[0])
        });
        let d = second_moments(&s, None).unwrap();
        assert!((d[(0, 1)] - 0.5 * beta).abs() < 1e-10);
        assert!((d[(0, 0)] - 0.5 * (1.0 + beta * beta)).abs() < 1e-10);
    }

    #[test]
    fn zero_state_rejected() {
        let s = GridState::zeros(grid_1d(), 0.0, 1.0);
        assert!(matches!(constants_of_motion(&s, 1.0), Err(GpxError::ZeroNorm)));
    }

    #[test]
    fn constants_record() {
        let s = coherent(grid_1d(), 0.5, 0.0, 1.0).scaled(Complex64::new(3f64.sqrt(), 0.0));
        let c = constants_of_motion(&s, 0.5).unwrap();
        assert!((c.norm_sq - 3.0).abs() < 1e-11);
        assert!((c.kappa_tilde - 1.5).abs() < 1e-11);
        assert!((c.point.z[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_moments() {
        let g = Grid::cube(2, -10.0, 10.0, 128).unwrap();
        let s = GridState::from_fn(g, 0.0, 1.0, |x| {
            let (a, b) = (x[0] - 1.0, x[1] + 0.5);
            Complex64::from_polar((-0.5 * (a * a + b * b) - 0.3 * a * b).exp(), 0.4 * x[0] - 0.2 * x[1])
        });
        let pt = moment_point(&s).unwrap();
        assert!((pt.z[0] - 0.4).abs() < 1e-9);
        assert!((pt.z[1] + 0.2).abs() < 1e-9);
        assert!((pt.z[2] - 1.0).abs() < 1e-9);
        assert!((pt.z[3] + 0.5).abs() < 1e-9);
        // |ψ|² = exp(−xᵀ M x) with M = [[1, .3], [.3, 1]] ⇒ σ_xx = M⁻¹/2
        let det = 1.0 - 0.09;
        assert!((pt.delta[(2, 2)] - 0.5 / det).abs() < 1e-9);
        assert!((pt.delta[(2, 3)] + 0.15 / det).abs() < 1e-9);
        let (_, mean, sxx) = position_moments(&s).unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-9);
        assert!((sxx[(0, 1)] - pt.delta[(2, 3)]).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn phase_invariance_and_uncertainty(
            x0 in -2.0f64..2.0,
            p0 in -2.0f64..2.0,
            width in 0.5f64..1.5,
            chirp in -0.5f64..0.5,
            alpha in 0.0f64..6.0,
        ) {
            let s = GridState::from_fn(grid_1d(), 0.0, 1.0, |x| {
                let d = x[0] - x0;
                Complex64::from_polar((-0.5 * d * d / (width * width)).exp(), p0 * x[0] + chirp * d * d)
            });
            let a = moment_point(&s).unwrap();
            let b = moment_point(&s.scaled(Complex64::from_polar(1.0, alpha))).unwrap();
            prop_assert!(a.max_deviation(&b) < 1e-12);
            let unc = a.delta[(0, 0)] * a.delta[(1, 1)] - a.delta[(0, 1)].powi(2);
            prop_assert!(unc >= 0.25 - 1e-10);
        }
    }
}
