//! Uniform Cartesian grids, sampled wave functions and spectral operators.
//!
//! Samples are stored row-major with the last axis fastest. Quadrature is the
//! periodic trapezoid rule (uniform weight `dV`), and the momentum operator
//! acts through the discrete Fourier transform with period `count·dx`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{GpxError, Result};

/// Default bound on the mass in each boundary layer, relative to the total.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;
/// Default bound on the relative spectral power in the top eighth of the band.
pub const DEFAULT_ALIAS_TOL: f64 = 1e-12;

const BINARY_MAGIC: &[u8; 4] = b"GPXS";
const BINARY_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub dx: f64,
    pub count: usize,
}

impl Axis {
    /// `count` equally spaced points covering `[min, max]`, both included.
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if count < 2 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(GpxError::Invalid(format!("bad axis [{min}, {max}] with {count} points")));
        }
        Ok(Axis { min, dx: (max - min) / (count - 1) as f64, count })
    }

    pub fn from_spacing(min: f64, dx: f64, count: usize) -> Result<Self> {
        if count < 2 || !(dx > 0.0) || !min.is_finite() {
            return Err(GpxError::Invalid(format!("bad axis min={min} dx={dx} count={count}")));
        }
        Ok(Axis { min, dx, count })
    }

    pub fn max(&self) -> f64 {
        self.min + (self.count - 1) as f64 * self.dx
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.dx
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.min + self.max())
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.max() - self.min)
    }

    /// Period of the discrete Fourier transform along this axis.
    pub fn period(&self) -> f64 {
        self.count as f64 * self.dx
    }

    /// Angular wave number of DFT bin `j`, with the Nyquist bin mapped to
    /// the negative side.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.count as i64;
        let jj = j as i64;
        let signed = if jj < (n + 1) / 2 { jj } else { jj - n };
        2.0 * std::f64::consts::PI * signed as f64 / self.period()
    }

    /// Offset of `other.min` from `self.min` in cells, if the two axes sit
    /// on a common lattice.
    pub fn lattice_offset(&self, other: &Axis) -> Option<i64> {
        if ((self.dx - other.dx) / self.dx).abs() > 1e-12 {
            return None;
        }
        let shift = (other.min - self.min) / self.dx;
        let k = shift.round();
        if (shift - k).abs() > 1e-6 {
            return None;
        }
        Some(k as i64)
    }

    /// Shifts the axis by a whole number of cells so that its center is as
    /// close as possible to `c`.
    pub fn recentered(&self, c: f64) -> Axis {
        let k = ((c - self.center()) / self.dx).round();
        Axis { min: self.min + k * self.dx, dx: self.dx, count: self.count }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(GpxError::DimensionMismatch(format!("grid of dimension {}", axes.len())));
        }
        Ok(Grid { axes })
    }

    /// Same axis on every dimension.
    pub fn cube(n: usize, min: f64, max: f64, count: usize) -> Result<Self> {
        Grid::new(vec![Axis::new(min, max, count)?; n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for k in (0..self.dim().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].count;
        }
        s
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.dx).product()
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for k in (0..self.dim()).rev() {
            let c = self.axes[k].count;
            out[k] = flat % c;
            flat /= c;
        }
    }

    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let mut idx = [0usize; 3];
        self.multi_index(flat, &mut idx[..self.dim()]);
        for k in 0..self.dim() {
            out[k] = self.axes[k].point(idx[k]);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.center()).collect()
    }

    pub fn recentered(&self, c: &[f64]) -> Grid {
        Grid { axes: self.axes.iter().zip(c).map(|(a, &ck)| a.recentered(ck)).collect() }
    }

    /// Per-axis lattice offsets of `other` relative to `self`.
    pub fn lattice_offsets(&self, other: &Grid) -> Option<Vec<i64>> {
        if self.dim() != other.dim() {
            return None;
        }
        self.axes.iter().zip(&other.axes).map(|(a, b)| a.lattice_offset(b)).collect()
    }

    /// Smallest grid on the common lattice containing both grids.
    pub fn union(&self, other: &Grid) -> Result<Grid> {
        let offs = self
            .lattice_offsets(other)
            .ok_or_else(|| GpxError::GridMismatch("grids do not share a lattice".into()))?;
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .zip(offs)
            .map(|((a, b), k)| {
                let lo = k.min(0);
                let hi = (k + b.count as i64).max(a.count as i64);
                Axis { min: a.min + lo as f64 * a.dx, dx: a.dx, count: (hi - lo) as usize }
            })
            .collect();
        Ok(Grid { axes })
    }

    /// Whether the two grids are the same up to round-off in `min`.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.dim() == other.dim()
            && self.lattice_offsets(other).is_some_and(|o| o.iter().all(|&k| k == 0))
            && self.axes.iter().zip(&other.axes).all(|(a, b)| a.count == b.count)
    }
}

/// Complex wave function sampled on a grid at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridState {
    pub grid: Grid,
    pub data: Vec<Complex64>,
    pub t: f64,
    pub hbar: f64,
}

impl GridState {
    pub fn new(grid: Grid, data: Vec<Complex64>, t: f64, hbar: f64) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(GpxError::DimensionMismatch(format!(
                "{} samples for a grid of {} points",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(GpxError::Invalid("non-finite amplitude".into()));
        }
        Ok(GridState { grid, data, t, hbar })
    }

    pub fn zeros(grid: Grid, t: f64, hbar: f64) -> Self {
        let data = vec![Complex64::new(0.0, 0.0); grid.len()];
        GridState { grid, data, t, hbar }
    }

    /// Samples `f(x)` at every grid point.
    pub fn from_fn<F: Fn(&[f64]) -> Complex64>(grid: Grid, t: f64, hbar: f64, f: F) -> Self {
        let n = grid.dim();
        let mut x = [0.0; 3];
        let data = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x[..n]);
                f(&x[..n])
            })
            .collect();
        GridState { grid, data, t, hbar }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn norm_squared(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scaled(&self, c: Complex64) -> GridState {
        GridState { data: self.data.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Copy of the state on another grid of the same lattice; samples outside
    /// the source grid are zero.
    pub fn resampled(&self, target: &Grid) -> Result<GridState> {
        if self.grid.same_as(target) {
            return Ok(GridState { grid: target.clone(), ..self.clone() });
        }
        let offs = target
            .lattice_offsets(&self.grid)
            .ok_or_else(|| GpxError::GridMismatch("grids do not share a lattice".into()))?;
        let n = self.dim();
        let mut out = GridState::zeros(target.clone(), self.t, self.hbar);
        let strides = target.strides();
        let mut idx = [0usize; 3];
        'points: for (i, v) in self.data.iter().enumerate() {
            self.grid.multi_index(i, &mut idx[..n]);
            let mut flat = 0usize;
            for k in 0..n {
                let j = idx[k] as i64 + offs[k];
                if j < 0 || j >= target.axis(k).count as i64 {
                    continue 'points;
                }
                flat += j as usize * strides[k];
            }
            out.data[flat] = *v;
        }
        Ok(out)
    }

    /// `c1·a + c2·b` on the union of the two (lattice-aligned) grids.
    pub fn linear_combination(c1: Complex64, a: &GridState, c2: Complex64, b: &GridState) -> Result<GridState> {
        let g = a.grid.union(&b.grid)?;
        let ra = a.resampled(&g)?;
        let rb = b.resampled(&g)?;
        let data = ra.data.iter().zip(&rb.data).map(|(x, y)| c1 * x + c2 * y).collect();
        Ok(GridState { grid: g, data, t: a.t, hbar: a.hbar })
    }

    /// `⟨self|other⟩` on the union grid.
    pub fn inner(&self, other: &GridState) -> Result<Complex64> {
        let (a, b) = self.aligned_pair(other)?;
        let s: Complex64 = a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum();
        Ok(s * a.grid.cell_volume())
    }

    /// `‖self − other‖` on the union grid.
    pub fn l2_distance(&self, other: &GridState) -> Result<f64> {
        let (a, b) = self.aligned_pair(other)?;
        let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).norm_sqr()).sum();
        Ok((s * a.grid.cell_volume()).sqrt())
    }

    fn aligned_pair(&self, other: &GridState) -> Result<(GridState, GridState)> {
        if self.grid.same_as(&other.grid) {
            return Ok((self.clone(), other.clone()));
        }
        let g = self.grid.union(&other.grid)?;
        Ok((self.resampled(&g)?, other.resampled(&g)?))
    }

    /// Fails unless every boundary layer (the outer `max(1, count/64)` cells
    /// of each face) holds at most `tol` of the total mass.
    pub fn check_tails(&self, tol: f64) -> Result<()> {
        let total: f64 = self.data.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return Err(GpxError::ZeroNorm);
        }
        let n = self.dim();
        let mut idx = [0usize; 3];
        for k in 0..n {
            let c = self.grid.axis(k).count;
            let w = (c / 64).max(1);
            let (mut lo, mut hi) = (0.0, 0.0);
            for (i, v) in self.data.iter().enumerate() {
                self.grid.multi_index(i, &mut idx[..n]);
                if idx[k] < w {
                    lo += v.norm_sqr();
                } else if idx[k] >= c - w {
                    hi += v.norm_sqr();
                }
            }
            let worst = lo.max(hi) / total;
            if worst > tol {
                return Err(GpxError::TailMass(format!(
                    "axis {k}: boundary layer holds {worst:.3e} of the mass (limit {tol:.1e})"
                )));
            }
        }
        Ok(())
    }

    /// Fails if the relative spectral power in the top eighth of the band on
    /// any axis exceeds `tol`.
    pub fn check_aliasing(&self, tol: f64) -> Result<()> {
        let spectral = Spectral::new(&self.grid);
        let mut hat = self.data.clone();
        spectral.forward(&mut hat);
        let total: f64 = hat.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return Err(GpxError::ZeroNorm);
        }
        let n = self.dim();
        let mut idx = [0usize; 3];
        for k in 0..n {
            let ax = self.grid.axis(k);
            let kmax = std::f64::consts::PI / ax.dx;
            let mut high = 0.0;
            for (i, v) in hat.iter().enumerate() {
                self.grid.multi_index(i, &mut idx[..n]);
                if ax.wavenumber(idx[k]).abs() >= 0.875 * kmax {
                    high += v.norm_sqr();
                }
            }
            let frac = high / total;
            if frac > tol {
                return Err(GpxError::Aliasing(format!(
                    "axis {k}: top-band spectral power {frac:.3e} (limit {tol:.1e})"
                )));
            }
        }
        Ok(())
    }

    /// Both resolution checks.
    pub fn check_resolved(&self, tail_tol: f64) -> Result<()> {
        self.check_tails(tail_tol)?;
        self.check_aliasing(DEFAULT_ALIAS_TOL)
    }

    /// `|ψ|²` at each grid point.
    pub fn density(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        for a in self.grid.axes() {
            w.write_all(&a.min.to_le_bytes())?;
            w.write_all(&a.dx.to_le_bytes())?;
            w.write_all(&(a.count as u64).to_le_bytes())?;
        }
        w.write_all(&self.t.to_le_bytes())?;
        w.write_all(&self.hbar.to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(GpxError::Invalid("not a binary state file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != BINARY_VERSION {
            return Err(GpxError::Invalid(format!("unsupported state file version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if !(1..=3).contains(&n) {
            return Err(GpxError::Invalid(format!("state file dimension {n}")));
        }
        let mut axes = Vec::with_capacity(n);
        for _ in 0..n {
            let min = read_f64(&mut r)?;
            let dx = read_f64(&mut r)?;
            let count = read_u64(&mut r)? as usize;
            axes.push(Axis::from_spacing(min, dx, count)?);
        }
        let grid = Grid::new(axes)?;
        let t = read_f64(&mut r)?;
        let hbar = read_f64(&mut r)?;
        let mut data = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = read_f64(&mut r)?;
            let im = read_f64(&mut r)?;
            data.push(Complex64::new(re, im));
        }
        GridState::new(grid, data, t, hbar)
    }

    /// CSV with a `#` preamble describing the grid, then one row per point:
    /// coordinates followed by the real and imaginary parts.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# gpx-state v{BINARY_VERSION}")?;
        writeln!(w, "# t {:.16e}", self.t)?;
        writeln!(w, "# hbar {:.16e}", self.hbar)?;
        for a in self.grid.axes() {
            writeln!(w, "# axis {:.16e} {:.16e} {}", a.min, a.dx, a.count)?;
        }
        let mut header: Vec<String> = (0..self.dim()).map(|k| format!("x{k}")).collect();
        header.push("re".into());
        header.push("im".into());
        writeln!(w, "{}", header.join(","))?;
        let n = self.dim();
        let mut x = [0.0; 3];
        for (i, v) in self.data.iter().enumerate() {
            self.grid.point(i, &mut x[..n]);
            for xk in &x[..n] {
                write!(w, "{xk:.16e},")?;
            }
            writeln!(w, "{:.16e},{:.16e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut t = None;
        let mut hbar = None;
        let mut axes = Vec::new();
        let mut data = Vec::new();
        let mut header_seen = false;
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts.first().copied() {
                    Some("t") => t = Some(parse_f64(parts.get(1))?),
                    Some("hbar") => hbar = Some(parse_f64(parts.get(1))?),
                    Some("axis") => {
                        let count = parts
                            .get(3)
                            .and_then(|s| s.parse::<usize>().ok())
                            .ok_or_else(|| GpxError::Invalid("bad axis line".into()))?;
                        axes.push(Axis::from_spacing(parse_f64(parts.get(1))?, parse_f64(parts.get(2))?, count)?);
                    }
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(GpxError::Invalid(format!("bad state row: {line}")));
            }
            let re = parse_f64(fields.get(fields.len() - 2))?;
            let im = parse_f64(fields.last())?;
            data.push(Complex64::new(re, im));
        }
        let grid = Grid::new(axes)?;
        let t = t.ok_or_else(|| GpxError::Invalid("state file lacks t".into()))?;
        let hbar = hbar.ok_or_else(|| GpxError::Invalid("state file lacks hbar".into()))?;
        GridState::new(grid, data, t, hbar)
    }

    /// Reads a state, choosing the format from the extension (`.csv` or
    /// binary otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            GridState::read_csv(f)
        } else {
            GridState::read_binary(BufReader::new(f))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(f)
        } else {
            self.write_binary(f)
        }
    }
}

fn parse_f64(s: Option<&&str>) -> Result<f64> {
    s.and_then(|v| v.trim().parse::<f64>().ok())
        .ok_or_else(|| GpxError::Invalid(format!("expected a number, got {s:?}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// FFT plans for every axis of a grid.
#[derive(Clone)]
pub struct Spectral {
    grid: Grid,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = grid.axes().iter().map(|a| planner.plan_fft_forward(a.count)).collect();
        let inverse = grid.axes().iter().map(|a| planner.plan_fft_inverse(a.count)).collect();
        Spectral { grid: grid.clone(), forward, inverse }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn along_axis(&self, data: &mut [Complex64], k: usize, fft: &Arc<dyn Fft<f64>>) {
        let strides = self.grid.strides();
        let count = self.grid.axis(k).count;
        if strides[k] == 1 {
            fft.process(data);
            return;
        }
        let st = strides[k];
        let block = st * count;
        let mut line = vec![Complex64::new(0.0, 0.0); count];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for base in (0..data.len()).step_by(block) {
            for inner in 0..st {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + inner + j * st];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, v) in line.iter().enumerate() {
                    data[base + inner + j * st] = *v;
                }
            }
        }
    }

    /// Unnormalized forward DFT over all axes.
    pub fn forward(&self, data: &mut [Complex64]) {
        for k in 0..self.grid.dim() {
            self.along_axis(data, k, &self.forward[k]);
        }
    }

    /// Inverse DFT over all axes, including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for k in 0..self.grid.dim() {
            self.along_axis(data, k, &self.inverse[k]);
        }
        let scale = 1.0 / self.grid.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    /// `p̂_k ψ = −iħ ∂_k ψ`, spectrally along axis `k` only. The Nyquist bin
    /// is dropped, as is standard for odd derivatives.
    pub fn momentum(&self, data: &[Complex64], k: usize, hbar: f64) -> Vec<Complex64> {
        let mut out = data.to_vec();
        self.along_axis(&mut out, k, &self.forward[k]);
        let ax = self.grid.axis(k);
        let n = self.grid.dim();
        let mut idx = [0usize; 3];
        let nyquist = ax.count.is_multiple_of(2);
        let scale = hbar / ax.count as f64;
        for (i, v) in out.iter_mut().enumerate() {
            self.grid.multi_index(i, &mut idx[..n]);
            let j = idx[k];
            if nyquist && j == ax.count / 2 {
                *v = Complex64::new(0.0, 0.0);
            } else {
                *v *= ax.wavenumber(j) * scale;
            }
        }
        self.along_axis(&mut out, k, &self.inverse[k]);
        out
    }

    /// Applies a Fourier multiplier `m(k)`, where `k` is the angular
    /// wave-vector of each bin.
    pub fn apply_multiplier<F: Fn(&[f64]) -> Complex64>(&self, data: &mut [Complex64], m: F) {
        self.forward(data);
        self.multiply_in_fourier(data, m);
        self.inverse(data);
    }

    /// Multiplies already transformed data by `m(k)`.
    pub fn multiply_in_fourier<F: Fn(&[f64]) -> Complex64>(&self, data: &mut [Complex64], m: F) {
        let n = self.grid.dim();
        let mut idx = [0usize; 3];
        let mut kv = [0.0; 3];
        for (i, v) in data.iter_mut().enumerate() {
            self.grid.multi_index(i, &mut idx[..n]);
            for d in 0..n {
                kv[d] = self.grid.axis(d).wavenumber(idx[d]);
            }
            *v *= m(&kv[..n]);
        }
    }

    /// Multiplier values on every bin, for reuse across many steps.
    pub fn tabulate<F: Fn(&[f64]) -> Complex64>(&self, m: F) -> Vec<Complex64> {
        let mut table = vec![Complex64::new(1.0, 0.0); self.grid.len()];
        self.multiply_in_fourier(&mut table, m);
        table
    }

    /// Shifts `ψ(x) → ψ(x + d)` exactly for band-limited samples.
    pub fn translate(&self, data: &mut [Complex64], d: &[f64]) {
        let n = self.grid.dim();
        let d: Vec<f64> = d[..n].to_vec();
        self.apply_multiplier(data, |k| {
            let phase: f64 = k.iter().zip(&d).map(|(a, b)| a * b).sum();
            Complex64::from_polar(1.0, phase)
        });
    }
}
