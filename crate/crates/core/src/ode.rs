//! Dormand–Prince 5(4) integrator with the classical continuous extension.
//!
//! Integration may run forward or backward in time. Every accepted step keeps
//! its interpolation coefficients, so the returned [`DenseSolution`] can be
//! evaluated anywhere on the integration interval with fourth-order accuracy.

use serde::{Deserialize, Serialize};

use crate::error::{GpxError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-10, atol: 1e-12 }
    }
}

impl Tolerance {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Tolerance { rtol, atol }
    }

    /// Same value for both components.
    pub fn uniform(tol: f64) -> Self {
        Tolerance { rtol: tol, atol: tol }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub max_step: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { max_step: f64::INFINITY, max_steps: 2_000_000, initial_step: None }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// One accepted step together with its interpolation coefficients.
#[derive(Clone, Debug)]
struct Step {
    t0: f64,
    h: f64,
    /// Five blocks of length `dim`: y0, Δy, and the three correction terms.
    coef: Vec<f64>,
}

/// Continuous solution of an initial value problem.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    dim: usize,
    t_start: f64,
    t_end: f64,
    y_start: Vec<f64>,
    y_end: Vec<f64>,
    steps: Vec<Step>,
}

impl DenseSolution {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn y_start(&self) -> &[f64] {
        &self.y_start
    }

    pub fn y_end(&self) -> &[f64] {
        &self.y_end
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    /// Accepted step boundaries, starting at `t_start` and ending at `t_end`.
    pub fn nodes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.steps.iter().map(|s| s.t0).collect();
        v.push(self.t_end);
        v
    }

    /// Whether `t` lies in the closed integration interval.
    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.t_start <= self.t_end {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        };
        let slack = 8.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(hi - lo);
        t >= lo - slack && t <= hi + slack
    }

    /// Solution at `t`. Returns [`GpxError::TrajectoryGap`] outside the
    /// integration interval.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// Time derivative of the interpolant at `t`.
    pub fn eval_derivative(&self, t: f64) -> Result<Vec<f64>> {
        if !self.contains(t) {
            return Err(GpxError::TrajectoryGap { t });
        }
        let d = self.dim;
        if self.steps.is_empty() {
            return Ok(vec![0.0; d]);
        }
        let step = &self.steps[self.step_index(t)];
        let s = (t - step.t0) / step.h;
        let s1 = 1.0 - s;
        let c = &step.coef;
        let mut out = vec![0.0; d];
        for i in 0..d {
            let u = c[3 * d + i] + s1 * c[4 * d + i];
            let du = -c[4 * d + i];
            let v = c[2 * d + i] + s * u;
            let dv = u + s * du;
            let w = c[d + i] + s1 * v;
            let dw = -v + s1 * dv;
            out[i] = (w + s * dw) / step.h;
        }
        Ok(out)
    }

    fn step_index(&self, t: f64) -> usize {
        let forward = self.t_end >= self.t_start;
        let idx = self.steps.partition_point(|s| if forward { s.t0 <= t } else { s.t0 >= t });
        idx.saturating_sub(1)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        if !self.contains(t) {
            return Err(GpxError::TrajectoryGap { t });
        }
        if t == self.t_end {
            out.copy_from_slice(&self.y_end);
            return Ok(());
        }
        if self.steps.is_empty() {
            out.copy_from_slice(&self.y_start);
            return Ok(());
        }
        let step = &self.steps[self.step_index(t)];
        let s = (t - step.t0) / step.h;
        let s1 = 1.0 - s;
        let d = self.dim;
        let c = &step.coef;
        for i in 0..d {
            out[i] = c[i] + s * (c[d + i] + s1 * (c[2 * d + i] + s * (c[3 * d + i] + s1 * c[4 * d + i])));
        }
        Ok(())
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerance) -> f64 {
    let mut acc = 0.0;
    for i in 0..err.len() {
        let sc = tol.atol + tol.rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / err.len().max(1) as f64).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], dir: f64, tol: &Tolerance) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let scale = |i: usize| tol.atol + tol.rtol * y0[i].abs();
    let d0 = (y0.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v / scale(i)).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = (0..n).map(|i| y0[i] + dir * h0 * f0[i]).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + dir * h0, &y1, &mut f1);
    let d2 = ((0..n).map(|i| ((f1[i] - f0[i]) / scale(i)).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

/// Integrates `y' = rhs(t, y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(rhs: F, t0: f64, y0: &[f64], t1: f64, tol: &Tolerance, opts: &OdeOptions) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    integrate_with_hook(rhs, t0, y0, t1, tol, opts, |_, _| {})
}

/// As [`integrate`], calling `hook(t, y)` after every accepted step. The hook
/// may adjust `y` in place (for instance to restore an exact symmetry).
pub fn integrate_with_hook<F, H>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    tol: &Tolerance,
    opts: &OdeOptions,
    mut hook: H,
) -> Result<DenseSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    H: FnMut(f64, &mut [f64]),
{
    let n = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(GpxError::Integrator { t: t0, reason: "non-finite initial state".into() });
    }
    let mut sol = DenseSolution {
        dim: n,
        t_start: t0,
        t_end: t1,
        y_start: y0.to_vec(),
        y_end: y0.to_vec(),
        steps: Vec::new(),
    };
    if t1 == t0 {
        return Ok(sol);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    rhs(t, &y, &mut k1);
    let mut h = match opts.initial_step {
        Some(h) => h.abs(),
        None => initial_step(&mut rhs, t0, &y, &k1, dir, tol),
    }
    .min(opts.max_step)
    .min(span);
    let mut steps = 0usize;
    let mut last_rejected = false;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        if steps >= opts.max_steps {
            return Err(GpxError::Integrator { t, reason: format!("exceeded {} steps", opts.max_steps) });
        }
        let mut last = false;
        if h >= remaining || remaining - h <= 1e-13 * span {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * span.max(t.abs()) {
            return Err(GpxError::Integrator { t, reason: format!("step size underflow ({h:e})") });
        }
        let hs = dir * h;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(t + C2 * hs, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * hs, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * hs, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * hs, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t1 } else { t + hs };
        rhs(t + hs, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_new, &ynew, &mut k7);
        for i in 0..n {
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        steps += 1;

        if ynew.iter().chain(k7.iter()).any(|v| !v.is_finite()) {
            if h > 1e-10 * span {
                h *= 0.25;
                last_rejected = true;
                continue;
            }
            return Err(GpxError::Integrator { t, reason: "non-finite state".into() });
        }

        let en = error_norm(&err, &y, &ynew, tol);
        if en <= 1.0 {
            let mut coef = vec![0.0; 5 * n];
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = hs * k1[i] - dy;
                coef[i] = y[i];
                coef[n + i] = dy;
                coef[2 * n + i] = bspl;
                coef[3 * n + i] = dy - hs * k7[i] - bspl;
                coef[4 * n + i] =
                    hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            sol.steps.push(Step { t0: t, h: hs, coef });
            let before = ynew.clone();
            hook(t_new, &mut ynew);
            std::mem::swap(&mut y, &mut ynew);
            t = t_new;
            if y != before {
                rhs(t, &y, &mut k1);
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            if last {
                break;
            }
            let mut fac = if en == 0.0 { FAC_MAX } else { SAFETY * en.powf(-0.2) };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.max_step);
            last_rejected = false;
        } else {
            let fac = (SAFETY * en.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
            last_rejected = true;
        }
    }
    sol.y_end = y;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], f: &mut [f64]) {
        f[0] = y[1];
        f[1] = -y[0];
    }

    #[test]
    fn harmonic_endpoint_and_dense_output() {
        let tol = Tolerance::default();
        let sol = integrate(oscillator, 0.0, &[1.0, 0.0], 10.0, &tol, &OdeOptions::default()).unwrap();
        let y = sol.y_end();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9, "{}", y[0]);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
        for k in 0..=400 {
            let t = 10.0 * k as f64 / 400.0;
            let v = sol.eval(t).unwrap();
            assert!((v[0] - t.cos()).abs() < 2e-9, "t={t} err={}", (v[0] - t.cos()).abs());
        }
        assert!(sol.eval(10.5).is_err());
    }

    #[test]
    fn backward_integration() {
        let tol = Tolerance::default();
        let sol = integrate(oscillator, 2.0, &[2f64.cos(), -2f64.sin()], -1.0, &tol, &OdeOptions::default())
            .unwrap();
        assert!((sol.y_end()[0] - (-1f64).cos()).abs() < 1e-9);
        let v = sol.eval(0.3).unwrap();
        assert!((v[0] - 0.3f64.cos()).abs() < 2e-9);
        assert_eq!(sol.eval(2.0).unwrap(), vec![2f64.cos(), -2f64.sin()]);
    }

    #[test]
    fn time_dependent_rhs() {
        // y' = cos t, y = sin t
        let sol = integrate(
            |t, _y, f| f[0] = t.cos(),
            0.0,
            &[0.0],
            3.0,
            &Tolerance::default(),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((sol.y_end()[0] - 3f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn reports_blowup() {
        let r = integrate(
            |_t, y, f| f[0] = y[0] * y[0],
            0.0,
            &[1.0],
            2.0,
            &Tolerance::default(),
            &OdeOptions { max_steps: 100_000, ..OdeOptions::default() },
        );
        assert!(matches!(r, Err(GpxError::Integrator { .. })));
    }

    #[test]
    fn hook_is_applied() {
        let sol = integrate_with_hook(
            oscillator,
            0.0,
            &[1.0, 0.0],
            1.0,
            &Tolerance::default(),
            &OdeOptions::default(),
            |_t, y| y[1] = 0.0,
        )
        .unwrap();
        assert_eq!(sol.y_end()[1], 0.0);
    }

    #[test]
    fn max_step_respected() {
        let sol = integrate(
            oscillator,
            0.0,
            &[1.0, 0.0],
            1.0,
            &Tolerance::uniform(1e-3),
            &OdeOptions { max_step: 0.01, ..OdeOptions::default() },
        )
        .unwrap();
        assert!(sol.num_steps() >= 100);
        let nodes = sol.nodes();
        assert!(nodes.windows(2).all(|w| w[1] - w[0] <= 0.01 + 1e-15));
    }
}
