//! Property tests of the evolution operator and its symmetry structure on
//! randomly drawn Gaussian wave packets.

use std::f64::consts::PI;

use gpx_core::evolution::{evolve_with_plan, Coupling};
use gpx_core::moments::moment_point;
use gpx_core::reference::{split_step_evolve, OracleConfig};
use gpx_core::symmetry::{
    apply_symmetry, family_generator, fock_state, ladder_apply, Center, IntertwinedOperator, Ladder,
};
use gpx_core::{
    evolve, evolve_composed, evolve_inverse, Complex64, EvolveOptions, Example1DParams, Example3DParams, Grid,
    GridState, OutputGrid, QuadraticModel,
};
use proptest::prelude::*;

fn example_1d() -> QuadraticModel {
    QuadraticModel::example_1d(&Example1DParams::reference(), 0.5, 1.0).unwrap()
}

fn packet(grid: &Grid, x0: f64, p0: f64, w: f64, chirp: f64) -> GridState {
    GridState::from_fn(grid.clone(), 0.0, 1.0, |x| {
        let d = x[0] - x0;
        let amp = (1.0 / (PI * w * w)).powf(0.25) * (-0.5 * d * d / (w * w)).exp();
        Complex64::from_polar(amp, p0 * d + 0.5 * chirp * d * d)
    })
}

fn on(grid: &Grid) -> EvolveOptions {
    EvolveOptions::default().with_output_grid(OutputGrid::Given(grid.clone()))
}

fn boost() -> IntertwinedOperator {
    IntertwinedOperator::linear(
        Complex64::new(0.0, 0.0),
        vec![Complex64::new(0.0, 1.0)],
        vec![Complex64::new(0.0, 0.0)],
        Center::FromState,
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    #[test]
    fn inverse_undoes_evolution(
        x0 in -1.0..1.0f64, p0 in -1.0..1.0f64, w in 0.7..1.4f64, chirp in -0.3..0.3f64, t in 0.2..2.5f64,
    ) {
        let model = example_1d();
        let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
        let psi = packet(&grid, x0, p0, w, chirp);
        let forward = evolve(&model, &psi, t, &EvolveOptions::default()).unwrap();
        let back = evolve_inverse(&model, &forward, 0.0, &on(&grid)).unwrap();
        prop_assert!(back.l2_distance(&psi).unwrap() < 1e-8);
    }

    #[test]
    fn composition_matches_direct(
        x0 in -1.0..1.0f64, p0 in -1.0..1.0f64, w in 0.7..1.4f64, t in 0.5..2.5f64, frac in 0.1..0.9f64,
    ) {
        let model = example_1d();
        let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
        let psi = packet(&grid, x0, p0, w, 0.0);
        let direct = evolve(&model, &psi, t, &on(&grid)).unwrap();
        let composed = evolve_composed(&model, &psi, frac * t, t, &on(&grid)).unwrap();
        prop_assert!(direct.l2_distance(&composed).unwrap() < 1e-7);
    }

    #[test]
    fn norm_is_conserved(amp in 0.3..2.0f64, x0 in -1.0..1.0f64, t in 0.1..3.0f64) {
        let model = example_1d();
        let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
        let psi = packet(&grid, x0, 0.2, 1.0, 0.0).scaled(Complex64::new(amp, 0.0));
        let out = evolve(&model, &psi, t, &EvolveOptions::default()).unwrap();
        prop_assert!((out.norm_squared() - psi.norm_squared()).abs() < 1e-8 * psi.norm_squared());
    }
}

#[test]
fn ladder_coefficients_up_to_eight() {
    let model = example_1d();
    let grid = Grid::cube(1, -14.0, 14.0, 2048).unwrap();
    let t = 0.3;
    let opts = on(&grid).with_coupling(Coupling::Fixed(model.kappa_tilde(1.0)));
    let fock: Vec<GridState> = (0..=9).map(|n| fock_state(&model, n).unwrap().on_grid(&grid, t).unwrap()).collect();
    for n in 0..=8 {
        let up = ladder_apply(&model, Ladder::Raise, &fock[n], &opts).unwrap();
        let c = fock[n + 1].inner(&up).unwrap();
        let expected = ((n + 1) as f64).sqrt();
        assert!((c - expected).norm() < 1e-6 * expected, "n = {n}: {c}");
        assert!(up.l2_distance(&fock[n + 1].scaled(Complex64::new(expected, 0.0))).unwrap() < 1e-6 * expected);
    }
    for a in 0..=8 {
        for b in 0..a {
            assert!(fock[a].inner(&fock[b]).unwrap().norm() < 1e-9, "<{a}|{b}>");
        }
    }
}

#[test]
fn lowering_the_ground_state_gives_zero() {
    let model = example_1d();
    let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
    let psi = fock_state(&model, 0).unwrap().on_grid(&grid, 1.1).unwrap();
    let down = ladder_apply(&model, Ladder::Lower, &psi, &on(&grid)).unwrap();
    assert!(down.norm() < 1e-9);
}

#[test]
fn family_generator_converges_quadratically() {
    let model = example_1d();
    let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
    let psi = fock_state(&model, 1).unwrap().on_grid(&grid, 0.7).unwrap();
    let opts = on(&grid).with_coupling(Coupling::Fixed(model.kappa_tilde(1.0)));
    // b̂ = iΔx generates boosts.
    let op = boost();
    let estimates: Vec<GridState> = [0.08, 0.04, 0.02, 0.01]
        .iter()
        .map(|&eps| family_generator(&model, &op, eps, &psi, 0.0, &opts).unwrap())
        .collect();
    let gaps: Vec<f64> = estimates.windows(2).map(|w| w[0].l2_distance(&w[1]).unwrap()).collect();
    for pair in gaps.windows(2) {
        let ratio = pair[0] / pair[1];
        assert!((ratio - 4.0).abs() < 0.4, "successive differences {gaps:?}");
    }
}

#[test]
fn symmetry_images_solve_the_equation() {
    let model = example_1d();
    let grid = Grid::cube(1, -12.0, 12.0, 1024).unwrap();
    let t = 0.6;
    let psi = fock_state(&model, 1).unwrap().on_grid(&grid, t).unwrap();
    let phi = apply_symmetry(&model, &boost(), &psi, 0.0, &on(&grid)).unwrap();
    let phi = phi.scaled(Complex64::new(1.0 / phi.norm(), 0.0));
    let delta = 0.2;
    let continued = evolve(&model, &phi, t + delta, &on(&grid)).unwrap();
    let oracle = split_step_evolve(&model, &phi, t + delta, &OracleConfig::default()).unwrap();
    let diff = continued.l2_distance(&oracle).unwrap();
    assert!(diff < 1e-5, "continuation vs oracle {diff:e}");
}

#[test]
fn three_dimensional_moments_follow_the_moment_system() {
    // Without the magnetic field the cross matrix is diagonal and the
    // quadrature runs axis by axis.
    let params = Example3DParams { h_field: 0.0, ..Example3DParams::reference() };
    let model = QuadraticModel::example_3d(&params, 0.5, 1.0).unwrap();
    let grid = Grid::cube(3, -6.0, 6.0, 96).unwrap();
    let psi = GridState::from_fn(grid.clone(), 0.0, 1.0, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::from_polar(PI.powf(-0.75) * (-0.5 * r2).exp(), 0.3 * x[0] - 0.2 * x[2])
    });
    // The default π/4 bound with 8σ reach would need ~270 points per axis;
    // the alias bound still applies.
    let opts = EvolveOptions { max_phase_per_cell: 2.0, ..EvolveOptions::default() };
    let (out, plan) = evolve_with_plan(&model, &psi, 2.0, &opts).unwrap();
    assert!((out.norm_squared() - psi.norm_squared()).abs() < 1e-8);
    let measured = moment_point(&out).unwrap();
    let deviation = measured.max_deviation(plan.final_moments());
    assert!(deviation < 1e-8, "moment deviation {deviation:e}");
}

#[test]
fn state_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::cube(1, -5.0, 5.0, 64).unwrap();
    let mut psi = packet(&grid, 0.3, -0.4, 0.9, 0.2);
    psi.t = 1.25;
    for name in ["state.bin", "state.csv"] {
        let path = dir.path().join(name);
        psi.save(&path).unwrap();
        let back = GridState::load(&path).unwrap();
        assert!(back.grid.same_as(&psi.grid));
        assert_eq!(back.t, psi.t);
        assert!(back.l2_distance(&psi).unwrap() < 1e-15);
    }
}
