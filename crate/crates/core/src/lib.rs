//! Exact evolution engine for the nonlocal Gross–Pitaevskii equation with
//! quadratic external and interaction potentials.
//!
//! The state's first and second moments obey a closed ODE system (the
//! Hamilton–Ehrenfest system). Substituting its solution into the nonlinear
//! Hamiltonian yields a linear Schrödinger equation with a quadratic
//! Hamiltonian whose Green function is known in closed form. Convolving the
//! initial state with that Green function, with the moments fixed by the
//! initial state itself, gives the exact nonlinear evolution.
//!
//! Module map:
//!
//! * [`model`] – problem definition and the two worked examples.
//! * [`ode`] – adaptive Dormand–Prince integrator with dense output.
//! * [`hes`] – moment dynamics and the matriciant of the system in variations.
//! * [`grid`] – grid states, spectral operators, state I/O.
//! * [`moments`] – norms and Weyl-symmetrized moments of grid states.
//! * [`kernel`] – action integral and the Green function, plus closed forms.
//! * [`evolution`] – the nonlinear evolution operator, inverse, group law,
//!   superposition.
//! * [`symmetry`] – symmetry operators, ladder operators, Fock hierarchy,
//!   quasi-energies.
//! * [`reference`] – split-step oracle and GPE residual.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod grid;
pub mod hes;
pub mod kernel;
pub mod model;
pub mod moments;
pub mod ode;
pub mod quadrature;
pub mod reference;
pub mod symmetry;

pub use error::{GpxError, Result};
pub use evolution::{evolve, evolve_composed, evolve_inverse, superpose, Coupling, EvolveOptions, OutputGrid};
pub use grid::{Axis, Grid, GridState};
pub use hes::{integrate_hes, integrate_variations, matriciant_blocks, Matriciant, MomentPoint, MomentTrajectory};
pub use model::{build_model, Example1DParams, Example3DParams, ModelSpec, QuadraticModel};
pub use ode::Tolerance;

pub use num_complex::Complex64;
