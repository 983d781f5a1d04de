//! Quadratic GPE problem class.
//!
//! Phase-space vectors are ordered `z = (p_1..p_n, x_1..x_n)` everywhere, so
//! the symplectic form is `J = [[0, -I], [I, 0]]`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GpxError, Result};

pub type MatrixSampler = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorSampler = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Inputs whose asymmetry is at most this (relative to their largest entry)
/// are symmetrized; anything larger is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Times at which time-dependent samplers are validated.
const VALIDATION_TIMES: [f64; 4] = [0.0, 0.3, 1.0, 2.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExampleKind {
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "3d")]
    ThreeD,
    #[serde(rename = "custom")]
    Custom,
}

fn one() -> f64 {
    1.0
}

/// Serializable model description.
///
/// Example models are described by their physical parameters, custom ones by
/// row-major `2n×2n` matrices. A custom drive enters as
/// `H_z(t) = hz + hz_cos·cos(ωt) + hz_sin·sin(ωt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub kappa: f64,
    pub example: ExampleKind,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub field_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_light: Option<f64>,
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub field_h: Option<f64>,
    #[serde(rename = "V0", default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hzz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hz_cos: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hz_sin: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wzz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wzw: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub www: Option<Vec<f64>>,
}

impl ModelSpec {
    fn empty(n: usize, example: ExampleKind, hbar: f64, kappa: f64) -> Self {
        ModelSpec {
            n,
            hbar,
            kappa,
            example,
            m: None,
            k: None,
            e: None,
            field_e: None,
            omega: None,
            a: None,
            b: None,
            c: None,
            c_light: None,
            field_h: None,
            v0: None,
            gamma: None,
            hzz: None,
            hz: None,
            hz_cos: None,
            hz_sin: None,
            wzz: None,
            wzw: None,
            www: None,
        }
    }

    pub fn example_1d(p: &Example1DParams, kappa: f64, hbar: f64) -> Self {
        let mut s = Self::empty(1, ExampleKind::OneD, hbar, kappa);
        s.m = Some(p.m);
        s.k = Some(p.k);
        s.e = Some(p.e);
        s.field_e = Some(p.field);
        s.omega = Some(p.omega);
        s.a = Some(p.a);
        s.b = Some(p.b);
        s.c = Some(p.c);
        s
    }

    pub fn example_3d(p: &Example3DParams, kappa: f64, hbar: f64) -> Self {
        let mut s = Self::empty(3, ExampleKind::ThreeD, hbar, kappa);
        s.m = Some(p.m);
        s.e = Some(p.e);
        s.c_light = Some(p.c_light);
        s.field_h = Some(p.h_field);
        s.field_e = Some(p.e_field);
        s.omega = Some(p.omega);
        s.k = Some(p.k);
        s.v0 = Some(p.v0);
        s.gamma = Some(p.gamma);
        s
    }

    /// Custom model with constant matrices (row-major) and no drive.
    pub fn custom(n: usize, hbar: f64, kappa: f64, hzz: Vec<f64>, hz: Vec<f64>) -> Self {
        let mut s = Self::empty(n, ExampleKind::Custom, hbar, kappa);
        s.hzz = Some(hzz);
        s.hz = Some(hz);
        s
    }
}

/// Sign of `κ̃·v`, the `ζ` of the worked examples.
pub fn zeta(kappa_tilde: f64, v: f64) -> f64 {
    let s = kappa_tilde * v;
    if s > 0.0 {
        1.0
    } else if s < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// "Nonlinear frequency" squared, `|κ̃ v| / m`.
pub fn omega_nl_sq(kappa_tilde: f64, v: f64, m: f64) -> f64 {
    (kappa_tilde * v).abs() / m
}

/// `ζ(v)·ω_nl²(v)`, which is just `κ̃v/m`.
fn nonlinear_shift(kappa_tilde: f64, v: f64, m: f64) -> f64 {
    zeta(kappa_tilde, v) * omega_nl_sq(kappa_tilde, v, m)
}

/// Driven 1D oscillator with quadratic nonlocal interaction
/// `V = ½(a x² + 2b x y + c y²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1DParams {
    pub m: f64,
    pub k: f64,
    pub e: f64,
    #[serde(rename = "E")]
    pub field: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Example1DParams {
    /// The parameter set used throughout the acceptance suite.
    pub fn reference() -> Self {
        Example1DParams { m: 1.0, k: 1.0, e: 1.0, field: 0.1, omega: 0.5, a: 0.2, b: 0.1, c: 0.3 }
    }

    pub fn omega0_sq(&self) -> f64 {
        self.k / self.m
    }

    /// Ω², the frequency of the second moments and of the kernel.
    pub fn big_omega_sq(&self, kappa_tilde: f64) -> f64 {
        self.omega0_sq() + nonlinear_shift(kappa_tilde, self.a, self.m)
    }

    /// Ω̃², the frequency of the first moments.
    pub fn big_omega_tilde_sq(&self, kappa_tilde: f64) -> f64 {
        self.omega0_sq() + nonlinear_shift(kappa_tilde, self.a + self.b, self.m)
    }

    pub fn big_omega(&self, kappa_tilde: f64) -> Result<f64> {
        let w2 = self.big_omega_sq(kappa_tilde);
        if w2 <= 0.0 {
            return Err(GpxError::NonPositiveFrequency { name: "Omega^2", value: w2 });
        }
        Ok(w2.sqrt())
    }

    /// Amplitude of the steady forced orbit `X(t) = X₀ cos ωt`.
    pub fn steady_amplitude(&self, kappa_tilde: f64) -> Result<f64> {
        let detuning = self.big_omega_tilde_sq(kappa_tilde) - self.omega * self.omega;
        if self.e * self.field == 0.0 {
            return Ok(0.0);
        }
        if detuning.abs() < 1e-14 {
            return Err(GpxError::Resonance(format!(
                "Omega_tilde^2 = omega^2 = {}",
                self.omega * self.omega
            )));
        }
        Ok(self.e * self.field / (self.m * detuning))
    }
}

/// Charged particle in a magnetic field, rotating electric field and
/// isotropic trap, with the quadratic part of a Gaussian pair interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example3DParams {
    pub m: f64,
    pub e: f64,
    pub c_light: f64,
    #[serde(rename = "H")]
    pub h_field: f64,
    #[serde(rename = "E")]
    pub e_field: f64,
    pub omega: f64,
    pub k: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub gamma: f64,
}

impl Example3DParams {
    /// A well-separated, non-resonant parameter set used in tests and configs.
    pub fn reference() -> Self {
        Example3DParams { m: 1.0, e: 1.0, c_light: 1.0, h_field: 0.6, e_field: 0.1, omega: 0.4, k: 1.0, v0: 0.2, gamma: 2.0 }
    }

    pub fn omega_h(&self) -> f64 {
        self.e * self.h_field / (self.m * self.c_light)
    }

    pub fn omega0_sq(&self) -> f64 {
        self.k / self.m
    }

    pub fn eta(&self) -> f64 {
        self.v0 / (self.gamma * self.gamma)
    }

    pub fn omega1_sq(&self, kappa_tilde: f64) -> f64 {
        let wh = 0.5 * self.omega_h();
        self.omega0_sq() + wh * wh - self.nl_eta(kappa_tilde)
    }

    pub fn omega2_sq(&self, kappa_tilde: f64) -> f64 {
        self.omega0_sq() - self.nl_eta(kappa_tilde)
    }

    /// `ζ(V₀)·ω_nl²(η)`.
    fn nl_eta(&self, kappa_tilde: f64) -> f64 {
        zeta(kappa_tilde, self.v0) * omega_nl_sq(kappa_tilde, self.eta(), self.m)
    }

    pub fn frequencies(&self, kappa_tilde: f64) -> Result<(f64, f64)> {
        let w1 = self.omega1_sq(kappa_tilde);
        let w2 = self.omega2_sq(kappa_tilde);
        if w1 <= 0.0 {
            return Err(GpxError::NonPositiveFrequency { name: "omega_1^2", value: w1 });
        }
        if w2 <= 0.0 {
            return Err(GpxError::NonPositiveFrequency { name: "omega_2^2", value: w2 });
        }
        Ok((w1.sqrt(), w2.sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExampleParams {
    OneD(Example1DParams),
    ThreeD(Example3DParams),
}

/// A validated quadratic model. Immutable after construction.
#[derive(Clone)]
pub struct QuadraticModel {
    n: usize,
    hbar: f64,
    mass: f64,
    kappa: f64,
    hzz: MatrixSampler,
    hz: VectorSampler,
    wzz: DMatrix<f64>,
    wzw: DMatrix<f64>,
    www: DMatrix<f64>,
    hzz_constant: bool,
    example: Option<ExampleParams>,
    spec: Option<ModelSpec>,
}

impl fmt::Debug for QuadraticModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadraticModel")
            .field("n", &self.n)
            .field("hbar", &self.hbar)
            .field("mass", &self.mass)
            .field("kappa", &self.kappa)
            .field("hzz(0)", &(self.hzz)(0.0))
            .field("example", &self.example)
            .finish()
    }
}

fn symmetrize_checked(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = m.amax().max(1.0);
    let dev = (m - m.transpose()).amax();
    if dev > SYMMETRY_TOL * scale {
        return Err(GpxError::Asymmetric { name: name.to_string(), deviation: dev });
    }
    Ok(exact_symmetric(m))
}

/// `(M + Mᵀ)/2` with the lower triangle copied from the upper one, so the
/// result is symmetric bit for bit.
pub fn exact_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        out[(i, i)] = m[(i, i)];
        for j in (i + 1)..k {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn matrix_from_row_major(name: &str, n2: usize, data: &[f64]) -> Result<DMatrix<f64>> {
    if data.len() != n2 * n2 {
        return Err(GpxError::DimensionMismatch(format!(
            "{name}: expected {} entries, got {}",
            n2 * n2,
            data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(n2, n2, data))
}

fn vector_of(name: &str, n2: usize, data: &[f64]) -> Result<DVector<f64>> {
    if data.len() != n2 {
        return Err(GpxError::DimensionMismatch(format!(
            "{name}: expected {n2} entries, got {}",
            data.len()
        )));
    }
    Ok(DVector::from_column_slice(data))
}

fn required(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| GpxError::Invalid(format!("missing parameter {name}")))
}

/// Builds and validates a model from its serializable description.
pub fn build_model(spec: &ModelSpec) -> Result<QuadraticModel> {
    if !(1..=3).contains(&spec.n) {
        return Err(GpxError::DimensionMismatch(format!("n = {} not in 1..=3", spec.n)));
    }
    if spec.hbar <= 0.0 || !spec.hbar.is_finite() {
        return Err(GpxError::Invalid(format!("hbar = {} must be positive", spec.hbar)));
    }
    let mut model = match spec.example {
        ExampleKind::OneD => {
            if spec.n != 1 {
                return Err(GpxError::DimensionMismatch("the 1d example has n = 1".into()));
            }
            let p = Example1DParams {
                m: required("m", spec.m)?,
                k: required("k", spec.k)?,
                e: required("e", spec.e)?,
                field: required("E", spec.field_e)?,
                omega: required("omega", spec.omega)?,
                a: required("a", spec.a)?,
                b: required("b", spec.b)?,
                c: required("c", spec.c)?,
            };
            QuadraticModel::example_1d_unchecked(&p, spec.kappa, spec.hbar)
        }
        ExampleKind::ThreeD => {
            if spec.n != 3 {
                return Err(GpxError::DimensionMismatch("the 3d example has n = 3".into()));
            }
            let p = Example3DParams {
                m: required("m", spec.m)?,
                e: required("e", spec.e)?,
                c_light: required("c_light", spec.c_light)?,
                h_field: required("H", spec.field_h)?,
                e_field: required("E", spec.field_e)?,
                omega: required("omega", spec.omega)?,
                k: required("k", spec.k)?,
                v0: required("V0", spec.v0)?,
                gamma: required("gamma", spec.gamma)?,
            };
            QuadraticModel::example_3d_unchecked(&p, spec.kappa, spec.hbar)
        }
        ExampleKind::Custom => {
            let n2 = 2 * spec.n;
            let hzz = matrix_from_row_major(
                "hzz",
                n2,
                spec.hzz.as_deref().ok_or_else(|| GpxError::Invalid("custom model needs hzz".into()))?,
            )?;
            let zero_v = vec![0.0; n2];
            let hz = vector_of("hz", n2, spec.hz.as_deref().unwrap_or(&zero_v))?;
            let hz_cos = vector_of("hz_cos", n2, spec.hz_cos.as_deref().unwrap_or(&zero_v))?;
            let hz_sin = vector_of("hz_sin", n2, spec.hz_sin.as_deref().unwrap_or(&zero_v))?;
            let omega = spec.omega.unwrap_or(0.0);
            let zero_m = vec![0.0; n2 * n2];
            let wzz = matrix_from_row_major("wzz", n2, spec.wzz.as_deref().unwrap_or(&zero_m))?;
            let wzw = matrix_from_row_major("wzw", n2, spec.wzw.as_deref().unwrap_or(&zero_m))?;
            let www = matrix_from_row_major("www", n2, spec.www.as_deref().unwrap_or(&zero_m))?;
            let hzz = symmetrize_checked("hzz", &hzz)?;
            let hz_sampler: VectorSampler =
                Arc::new(move |t: f64| &hz + &hz_cos * (omega * t).cos() + &hz_sin * (omega * t).sin());
            QuadraticModel {
                n: spec.n,
                hbar: spec.hbar,
                mass: spec.m.unwrap_or(1.0),
                kappa: spec.kappa,
                hzz: Arc::new(move |_t| hzz.clone()),
                hz: hz_sampler,
                wzz,
                wzw,
                www,
                hzz_constant: true,
                example: None,
                spec: None,
            }
        }
    };
    model.spec = Some(spec.clone());
    model.validate()?;
    Ok(model)
}

impl QuadraticModel {
    /// Model from callable samplers. `hzz` may depend on time; the `W`
    /// matrices are constant.
    #[allow(clippy::too_many_arguments)]
    pub fn from_samplers(
        n: usize,
        hbar: f64,
        mass: f64,
        kappa: f64,
        hzz: MatrixSampler,
        hz: VectorSampler,
        wzz: DMatrix<f64>,
        wzw: DMatrix<f64>,
        www: DMatrix<f64>,
    ) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(GpxError::DimensionMismatch(format!("n = {n} not in 1..=3")));
        }
        let model = QuadraticModel {
            n,
            hbar,
            mass,
            kappa,
            hzz,
            hz,
            wzz,
            wzw,
            www,
            hzz_constant: false,
            example: None,
            spec: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn example_1d(p: &Example1DParams, kappa: f64, hbar: f64) -> Result<Self> {
        build_model(&ModelSpec::example_1d(p, kappa, hbar))
    }

    pub fn example_3d(p: &Example3DParams, kappa: f64, hbar: f64) -> Result<Self> {
        build_model(&ModelSpec::example_3d(p, kappa, hbar))
    }

    /// 1D oscillator `p²/2m + m ω² x²/2` without interaction.
    pub fn harmonic(m: f64, omega: f64, hbar: f64) -> Result<Self> {
        let mut spec = ModelSpec::custom(1, hbar, 0.0, vec![1.0 / m, 0.0, 0.0, m * omega * omega], vec![0.0, 0.0]);
        spec.m = Some(m);
        build_model(&spec)
    }

    /// 1D free particle.
    pub fn free(m: f64, hbar: f64) -> Result<Self> {
        let mut spec = ModelSpec::custom(1, hbar, 0.0, vec![1.0 / m, 0.0, 0.0, 0.0], vec![0.0, 0.0]);
        spec.m = Some(m);
        build_model(&spec)
    }

    fn example_1d_unchecked(p: &Example1DParams, kappa: f64, hbar: f64) -> Self {
        let mut hzz = DMatrix::zeros(2, 2);
        hzz[(0, 0)] = 1.0 / p.m;
        hzz[(1, 1)] = p.k;
        let xx = |v: f64| {
            let mut w = DMatrix::zeros(2, 2);
            w[(1, 1)] = v;
            w
        };
        let (e, field, omega) = (p.e, p.field, p.omega);
        QuadraticModel {
            n: 1,
            hbar,
            mass: p.m,
            kappa,
            hzz: Arc::new(move |_t| hzz.clone()),
            hz: Arc::new(move |t| DVector::from_column_slice(&[0.0, -e * field * (omega * t).cos()])),
            wzz: xx(p.a),
            wzw: xx(p.b),
            www: xx(p.c),
            hzz_constant: true,
            example: Some(ExampleParams::OneD(*p)),
            spec: None,
        }
    }

    fn example_3d_unchecked(p: &Example3DParams, kappa: f64, hbar: f64) -> Self {
        let wh = p.omega_h();
        let mut hzz = DMatrix::zeros(6, 6);
        for i in 0..3 {
            hzz[(i, i)] = 1.0 / p.m;
        }
        // (p - eA/c)²/2m with A = ½ H × x expands to the cross terms below.
        hzz[(0, 4)] = 0.5 * wh;
        hzz[(4, 0)] = 0.5 * wh;
        hzz[(1, 3)] = -0.5 * wh;
        hzz[(3, 1)] = -0.5 * wh;
        let trap_xy = p.k + 0.25 * p.m * wh * wh;
        hzz[(3, 3)] = trap_xy;
        hzz[(4, 4)] = trap_xy;
        hzz[(5, 5)] = p.k;
        let eta = p.eta();
        let xx = |v: f64| {
            let mut w = DMatrix::zeros(6, 6);
            for i in 3..6 {
                w[(i, i)] = v;
            }
            w
        };
        let (e, field, omega) = (p.e, p.e_field, p.omega);
        // The constant V0 of the truncated Gaussian only shifts the global
        // phase and is not part of the quadratic form.
        QuadraticModel {
            n: 3,
            hbar,
            mass: p.m,
            kappa,
            hzz: Arc::new(move |_t| hzz.clone()),
            hz: Arc::new(move |t| {
                let (s, c) = (omega * t).sin_cos();
                DVector::from_column_slice(&[0.0, 0.0, 0.0, -e * field * c, -e * field * s, 0.0])
            }),
            wzz: xx(-eta),
            wzw: xx(eta),
            www: xx(-eta),
            hzz_constant: true,
            example: Some(ExampleParams::ThreeD(*p)),
            spec: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let n2 = 2 * self.n;
        if self.mass <= 0.0 || !self.mass.is_finite() {
            return Err(GpxError::Invalid(format!("mass = {} must be positive", self.mass)));
        }
        for (name, w) in [("wzz", &self.wzz), ("wzw", &self.wzw), ("www", &self.www)] {
            if w.nrows() != n2 || w.ncols() != n2 {
                return Err(GpxError::DimensionMismatch(format!("{name} must be {n2}x{n2}")));
            }
        }
        symmetrize_checked("wzz", &self.wzz)?;
        symmetrize_checked("www", &self.www)?;
        for &t in &VALIDATION_TIMES {
            let h = (self.hzz)(t);
            if h.nrows() != n2 || h.ncols() != n2 {
                return Err(GpxError::DimensionMismatch(format!("hzz({t}) must be {n2}x{n2}")));
            }
            symmetrize_checked("hzz", &h)?;
            let v = (self.hz)(t);
            if v.len() != n2 {
                return Err(GpxError::DimensionMismatch(format!("hz({t}) must have {n2} entries")));
            }
            let hpp = h.view((0, 0), (self.n, self.n)).into_owned();
            let scale = hpp.amax();
            if scale == 0.0 || hpp.determinant().abs() <= 1e-12 * scale.powi(self.n as i32) {
                return Err(GpxError::SingularMomentumBlock { t });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn example(&self) -> Option<&ExampleParams> {
        self.example.as_ref()
    }

    pub fn example_1d_params(&self) -> Result<Example1DParams> {
        match self.example {
            Some(ExampleParams::OneD(p)) => Ok(p),
            _ => Err(GpxError::Unsupported("operation requires the 1d example model".into())),
        }
    }

    pub fn example_3d_params(&self) -> Result<Example3DParams> {
        match self.example {
            Some(ExampleParams::ThreeD(p)) => Ok(p),
            _ => Err(GpxError::Unsupported("operation requires the 3d example model".into())),
        }
    }

    pub fn spec(&self) -> Option<&ModelSpec> {
        self.spec.as_ref()
    }

    pub fn is_hzz_constant(&self) -> bool {
        self.hzz_constant
    }

    /// `ℋ_zz(t)`, exactly symmetric.
    pub fn hzz(&self, t: f64) -> DMatrix<f64> {
        exact_symmetric(&(self.hzz)(t))
    }

    pub fn hz(&self, t: f64) -> DVector<f64> {
        (self.hz)(t)
    }

    pub fn wzz(&self) -> &DMatrix<f64> {
        &self.wzz
    }

    pub fn wzw(&self) -> &DMatrix<f64> {
        &self.wzw
    }

    pub fn www(&self) -> &DMatrix<f64> {
        &self.www
    }

    /// `𝔥_zz(t) = ℋ_zz(t) + κ̃ W_zz`.
    pub fn effective_hessian(&self, kappa_tilde: f64, t: f64) -> DMatrix<f64> {
        exact_symmetric(&((self.hzz)(t) + &self.wzz * kappa_tilde))
    }

    /// Matrix driving the first moments: `ℋ_zz + κ̃(W_zz + W_zw)`.
    pub fn first_moment_matrix(&self, kappa_tilde: f64, t: f64) -> DMatrix<f64> {
        (self.hzz)(t) + (&self.wzz + &self.wzw) * kappa_tilde
    }

    /// The scalar part `𝔥(t)` of the associated linear Hamiltonian for the
    /// phase-space point `z` and second moments `delta`.
    pub fn lase_energy(&self, kappa_tilde: f64, t: f64, z: &DVector<f64>, delta: &DMatrix<f64>) -> f64 {
        let quad = (self.hzz)(t) + (&self.wzz + &self.wzw * 2.0 + &self.www) * kappa_tilde;
        let trace = (&self.www * delta).trace();
        0.5 * z.dot(&(quad * z)) + (self.hz)(t).dot(z) + 0.5 * kappa_tilde * trace
    }

    /// Effective coupling `κ̃ = κ‖ψ‖²`.
    pub fn kappa_tilde(&self, norm_sq: f64) -> f64 {
        self.kappa * norm_sq
    }
}

/// Symplectic unit `J = [[0, -I], [I, 0]]` of size `2n`.
pub fn symplectic_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// `J·v` without forming `J`.
pub fn apply_j(n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..n {
        out[i] = -v[n + i];
        out[n + i] = v[i];
    }
}
