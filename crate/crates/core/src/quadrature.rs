//! Trapezoidal quadrature of `Ψ(x) = ∫ G(x, y) ψ(y) dy` on grids.
//!
//! The kernel phase splits into an output factor `a(x)`, an input factor
//! `b(y)` and the bilinear cross term `⟨Δx, λ₃⁻¹Δy⟩/ħ`. The input factor is
//! applied once, then the cross term is summed axis group by axis group,
//! where a group is a connected block of the cross matrix. For a fixed output
//! point the cross phase is linear in `Δy`, so every inner sum runs as a
//! complex recurrence along the fastest axis, reseeded periodically.
//!
//! Each output sample is an independent reduction; with the `parallel`
//! feature the outputs are distributed with rayon.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{GpxError, Result};
use crate::grid::{Grid, GridState};
use crate::kernel::KernelContext;

/// Largest number of input points coupled by one dense axis group.
pub const MAX_GROUP_POINTS: usize = 16384;
/// Recurrence steps between exact re-evaluations of the phase factor.
const RESEED: usize = 64;

/// Connected components of the coupling graph of `c`.
pub fn axis_groups(c: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = c.nrows();
    let scale = c.amax().max(f64::MIN_POSITIVE);
    let mut group_of: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if group_of[start].is_some() {
            continue;
        }
        let gi = groups.len();
        let mut stack = vec![start];
        let mut members = Vec::new();
        group_of[start] = Some(gi);
        while let Some(k) = stack.pop() {
            members.push(k);
            for l in 0..n {
                let coupled = c[(k, l)].abs() > 1e-14 * scale || c[(l, k)].abs() > 1e-14 * scale;
                if coupled && group_of[l].is_none() {
                    group_of[l] = Some(gi);
                    stack.push(l);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

/// Working array: samples plus, per axis, its current coordinates.
struct Stage {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Shared, read-only description of one group transform.
struct GroupTransform<'a> {
    group: &'a [usize],
    in_shape: &'a [usize],
    in_strides: Vec<usize>,
    out_shape: Vec<usize>,
    out_strides: Vec<usize>,
    /// `Δx` values along each axis of the output grid.
    dx: &'a [Vec<f64>],
    /// First `Δy` and the spacing along each axis of the input grid.
    dy0: &'a [f64],
    step: &'a [f64],
    /// Cross matrix divided by ħ.
    c: &'a DMatrix<f64>,
    input: &'a [Complex64],
}

impl GroupTransform<'_> {
    fn eval(&self, flat: usize) -> Complex64 {
        let n = self.in_shape.len();
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for k in 0..n {
            idx[k] = rem / self.out_strides[k];
            rem %= self.out_strides[k];
        }
        // Frequencies w_l = Σ_k Δx_k C_kl / ħ over the group.
        let mut w = [0.0; 3];
        for &l in self.group {
            let mut acc = 0.0;
            for &k in self.group {
                acc += self.dx[k][idx[k]] * self.c[(k, l)];
            }
            w[l] = acc;
        }
        let mut base = 0usize;
        for k in 0..n {
            if !self.group.contains(&k) {
                base += idx[k] * self.in_strides[k];
            }
        }
        let g = self.group;
        let last = *g.last().expect("non-empty group");
        let row_len = self.in_shape[last];
        let row_stride = self.in_strides[last];
        let dphase = w[last] * self.step[last];
        let rot = Complex64::from_polar(1.0, dphase);
        let outer: Vec<usize> = g[..g.len() - 1].to_vec();
        let rows: usize = outer.iter().map(|&k| self.in_shape[k]).product();
        let mut sum = Complex64::new(0.0, 0.0);
        let mut oidx = [0usize; 3];
        for r in 0..rows {
            let mut rr = r;
            let mut offset = base;
            let mut phase0 = w[last] * self.dy0[last];
            for &k in outer.iter().rev() {
                oidx[k] = rr % self.in_shape[k];
                rr /= self.in_shape[k];
                offset += oidx[k] * self.in_strides[k];
                phase0 += w[k] * (self.dy0[k] + oidx[k] as f64 * self.step[k]);
            }
            let mut j = 0usize;
            while j < row_len {
                let mut e = Complex64::from_polar(1.0, phase0 + j as f64 * dphase);
                let end = (j + RESEED).min(row_len);
                let mut p = offset + j * row_stride;
                for _ in j..end {
                    sum += e * self.input[p];
                    e *= rot;
                    p += row_stride;
                }
                j = end;
            }
        }
        sum
    }
}

fn run_group(t: &GroupTransform<'_>, parallel: bool) -> Vec<Complex64> {
    let total: usize = t.out_shape.iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); total];
    fill(&mut out, |i| t.eval(i), parallel);
    out
}

#[cfg(feature = "parallel")]
fn fill<F: Fn(usize) -> Complex64 + Sync>(out: &mut [Complex64], f: F, parallel: bool) {
    use rayon::prelude::*;
    if parallel {
        out.par_iter_mut().with_min_len(64).enumerate().for_each(|(i, v)| *v = f(i));
    } else {
        out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
    }
}

#[cfg(not(feature = "parallel"))]
fn fill<F: Fn(usize) -> Complex64>(out: &mut [Complex64], f: F, _parallel: bool) {
    out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

fn apply(ctx: &KernelContext, input: &GridState, out_grid: &Grid, parallel: bool) -> Result<GridState> {
    let n = ctx.dim();
    if input.dim() != n || out_grid.dim() != n {
        return Err(GpxError::DimensionMismatch(format!(
            "kernel of dimension {n} applied to grids of dimension {} -> {}",
            input.dim(),
            out_grid.dim()
        )));
    }
    let hbar = ctx.hbar();
    let xs = ctx.start().x();
    let xt = ctx.end().x();
    let in_grid = &input.grid;

    // φ(y) = e^{i b(y)} ψ(y)
    let mut y = [0.0; 3];
    let mut dyv = [0.0; 3];
    let phi: Vec<Complex64> = input
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            in_grid.point(i, &mut y[..n]);
            for k in 0..n {
                dyv[k] = y[k] - xs[k];
            }
            v * Complex64::from_polar(1.0, ctx.in_phase(&dyv[..n]))
        })
        .collect();

    let c = ctx.cross() / hbar;
    let groups = axis_groups(&c);
    for g in &groups {
        let pts: usize = g.iter().map(|&k| in_grid.axis(k).count).product();
        if pts > MAX_GROUP_POINTS {
            return Err(GpxError::Unsupported(format!(
                "dense kernel group over axes {g:?} couples {pts} points (limit {MAX_GROUP_POINTS})"
            )));
        }
    }
    let dx: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let a = out_grid.axis(k);
            (0..a.count).map(|i| a.point(i) - xt[k]).collect()
        })
        .collect();
    let dy0: Vec<f64> = (0..n).map(|k| in_grid.axis(k).min - xs[k]).collect();
    let step: Vec<f64> = (0..n).map(|k| in_grid.axis(k).dx).collect();

    let mut stage = Stage { shape: in_grid.shape(), data: phi };
    for g in &groups {
        let mut out_shape = stage.shape.clone();
        for &k in g {
            out_shape[k] = out_grid.axis(k).count;
        }
        let t = GroupTransform {
            group: g,
            in_shape: &stage.shape,
            in_strides: strides_of(&stage.shape),
            out_strides: strides_of(&out_shape),
            out_shape: out_shape.clone(),
            dx: &dx,
            dy0: &dy0,
            step: &step,
            c: &c,
            input: &stage.data,
        };
        let data = run_group(&t, parallel);
        stage = Stage { shape: out_shape, data };
    }

    // Ψ(x) = pref · e^{iS/ħ} · dV · e^{i a(x)} · (group sums)
    let global = ctx.prefactor() * Complex64::from_polar(in_grid.cell_volume(), ctx.action() / hbar);
    let mut x = [0.0; 3];
    let mut dxv = [0.0; 3];
    let data: Vec<Complex64> = stage
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| {
            out_grid.point(i, &mut x[..n]);
            for k in 0..n {
                dxv[k] = x[k] - xt[k];
            }
            v * global * Complex64::from_polar(1.0, ctx.out_phase(&dxv[..n]))
        })
        .collect();
    GridState::new(out_grid.clone(), data, ctx.t(), input.hbar)
}

/// Applies the kernel, distributing output points over threads when the
/// `parallel` feature is enabled.
pub fn apply_kernel(ctx: &KernelContext, input: &GridState, out_grid: &Grid) -> Result<GridState> {
    apply(ctx, input, out_grid, cfg!(feature = "parallel"))
}

/// Single-threaded reference path.
pub fn apply_kernel_sequential(ctx: &KernelContext, input: &GridState, out_grid: &Grid) -> Result<GridState> {
    apply(ctx, input, out_grid, false)
}

#[cfg(feature = "parallel")]
pub fn apply_kernel_parallel(ctx: &KernelContext, input: &GridState, out_grid: &Grid) -> Result<GridState> {
    apply(ctx, input, out_grid, true)
}
