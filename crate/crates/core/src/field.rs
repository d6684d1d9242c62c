//! Periodic-box discretization of R^n: grids, complex fields, the continuum-scaled
//! discrete Fourier transform, weighted Lebesgue norms and the conjugated
//! polyharmonic operator as a Fourier multiplier.
//!
//! Transform convention: `f^(xi) = int e^{-i x.xi} f(x) dx`, approximated by the
//! uniform quadrature `h^n sum_j f(x_j) e^{-i x_j.xi}` on the box `[-L, L)^n`.
//! The inverse carries `(2 pi)^{-n}`, which on the frequency lattice
//! `(pi/L) Z^n` becomes `(2L)^{-n}`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::{symbol_raw, ZetaVector};

pub type C64 = Complex64;

/// Uniform periodic grid covering `[-L, L)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    pub points_per_axis: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize, m: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("dimension n = {n} < 2")));
        }
        if m < 1 {
            return Err(Error::InvalidGrid("operator order m must be >= 1".into()));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis = {points_per_axis} must be a power of two >= 8"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_width = {half_width} must be > 0"
            )));
        }
        Ok(Self {
            n,
            m,
            points_per_axis,
            half_width,
        })
    }

    /// Checks the standing assumption `n > 2m`.
    pub fn require_n_gt_2m(&self) -> Result<()> {
        if self.n > 2 * self.m {
            Ok(())
        } else {
            Err(Error::DimensionOrder {
                n: self.n,
                m: self.m,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    /// Spacing of the frequency lattice, `pi / L`.
    pub fn freq_step(&self) -> f64 {
        PI / self.half_width
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Folded integer frequency index in `[-N/2, N/2)`.
    pub fn folded(&self, k: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    pub fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        let np = self.points_per_axis;
        for a in (0..self.n).rev() {
            idx[a] = flat % np;
            flat /= np;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let np = self.points_per_axis;
        let h = self.spacing();
        let mut rest = flat;
        for a in (0..self.n).rev() {
            out[a] = -self.half_width + (rest % np) as f64 * h;
            rest /= np;
        }
    }

    /// Frequency `(pi/L) k + shift` of the Fourier sample at `flat`.
    pub fn frequency(&self, flat: usize, shift: &[f64], out: &mut [f64]) {
        let np = self.points_per_axis;
        let dk = self.freq_step();
        let mut rest = flat;
        for a in (0..self.n).rev() {
            out[a] = self.folded(rest % np) as f64 * dk + shift[a];
            rest /= np;
        }
    }

    /// Flat index of the lattice frequency with the given folded integer coordinates.
    pub fn flat_of_folded(&self, k: &[i64]) -> Option<usize> {
        let np = self.points_per_axis as i64;
        let mut flat = 0usize;
        for &ki in k {
            if ki < -np / 2 || ki >= np / 2 {
                return None;
            }
            flat = flat * self.points_per_axis + ki.rem_euclid(np) as usize;
        }
        Some(flat)
    }

    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.n == other.n
            && self.points_per_axis == other.points_per_axis
            && self.half_width == other.half_width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    Physical,
    Fourier,
}

/// Complex scalar field on a [`GridSpec`].
///
/// `shift` is a Bloch frequency offset: a physical field with shift `k` is
/// `e^{i k.x}` times a periodic function, and a Fourier field with shift `k`
/// holds samples at `(pi/L) Z^n + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub data: Vec<C64>,
    pub representation: Representation,
    pub shift: Vec<f64>,
}

impl ComplexField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); grid.len()],
            shift: vec![0.0; grid.n],
            grid: grid.clone(),
            representation: Representation::Physical,
        }
    }

    pub fn from_data(
        grid: &GridSpec,
        data: Vec<C64>,
        representation: Representation,
    ) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Contract(format!(
                "data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            data,
            representation,
            shift: vec![0.0; grid.n],
        })
    }

    /// Samples `f` at the physical grid points.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> C64) -> Self {
        let mut x = vec![0.0; grid.n];
        let data = (0..grid.len())
            .map(|i| {
                grid.point(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            grid: grid.clone(),
            data,
            representation: Representation::Physical,
            shift: vec![0.0; grid.n],
        }
    }

    pub fn from_real_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        assert_eq!(shift.len(), self.grid.n);
        self.shift = shift;
        self
    }

    pub fn is_physical(&self) -> bool {
        self.representation == Representation::Physical
    }

    fn require(&self, repr: Representation) -> Result<()> {
        if self.representation != repr {
            return Err(Error::Contract(format!(
                "expected {repr:?} representation, got {:?}",
                self.representation
            )));
        }
        Ok(())
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= a);
        out
    }

    /// Pointwise product; Bloch shifts add.
    pub fn mul(&self, other: &ComplexField) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
        for (s, t) in out.shift.iter_mut().zip(&other.shift) {
            *s += t;
        }
        Ok(out)
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.conj());
        out.shift.iter_mut().for_each(|s| *s = -*s);
        out
    }

    fn check_compatible(&self, other: &ComplexField) -> Result<()> {
        if !self.grid.same_geometry(&other.grid) {
            return Err(Error::GridMismatch);
        }
        if self.representation != other.representation {
            return Err(Error::Contract("representation mismatch".into()));
        }
        Ok(())
    }

    /// Plain discrete L2 norm (quadrature weight applied in physical space,
    /// `(2L)^{-n}` in Fourier space so that Parseval holds exactly).
    pub fn l2(&self) -> f64 {
        let sum: f64 = self.data.iter().map(|v| v.norm_sqr()).sum();
        match self.representation {
            Representation::Physical => (sum * self.grid.cell_volume()).sqrt(),
            Representation::Fourier => {
                (sum / (2.0 * self.grid.half_width).powi(self.grid.n as i32)).sqrt()
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Quadrature of `int f dx` over the box.
    pub fn integral(&self) -> C64 {
        self.data.iter().sum::<C64>() * self.grid.cell_volume()
    }
}

fn axis_transform(data: &mut [C64], n: usize, np: usize, fft: &dyn Fft<f64>) {
    let total = data.len();
    let mut buf = vec![C64::new(0.0, 0.0); total];
    for axis in 0..n {
        let stride = np.pow((n - 1 - axis) as u32);
        let outer = total / (np * stride);
        // gather all lines of this axis contiguously
        let mut line = 0;
        for o in 0..outer {
            let base = o * np * stride;
            for inner in 0..stride {
                let start = line * np;
                for k in 0..np {
                    buf[start + k] = data[base + inner + k * stride];
                }
                line += 1;
            }
        }
        fft.process(&mut buf);
        line = 0;
        for o in 0..outer {
            let base = o * np * stride;
            for inner in 0..stride {
                let start = line * np;
                for k in 0..np {
                    data[base + inner + k * stride] = buf[start + k];
                }
                line += 1;
            }
        }
    }
}

fn parity_sign(grid: &GridSpec, flat: usize) -> f64 {
    let np = grid.points_per_axis;
    let mut rest = flat;
    let mut s = 0usize;
    for _ in 0..grid.n {
        s += rest % np;
        rest /= np;
    }
    if s.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Multiplies `data` by `e^{sign * i shift.x}` at the physical grid points.
fn modulate(grid: &GridSpec, data: &mut [C64], shift: &[f64], sign: f64) {
    if shift.iter().all(|&s| s == 0.0) {
        return;
    }
    let mut x = vec![0.0; grid.n];
    for (i, v) in data.iter_mut().enumerate() {
        grid.point(i, &mut x);
        let phase: f64 = x.iter().zip(shift).map(|(a, b)| a * b).sum();
        *v *= C64::from_polar(1.0, sign * phase);
    }
}

/// Physical -> Fourier, samples at `(pi/L) Z^n + f.shift`.
pub fn fft_forward(f: &ComplexField) -> Result<ComplexField> {
    f.require(Representation::Physical)?;
    let grid = &f.grid;
    let mut data = f.data.clone();
    modulate(grid, &mut data, &f.shift, -1.0);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(grid.points_per_axis);
    axis_transform(&mut data, grid.n, grid.points_per_axis, fft.as_ref());
    let vol = grid.cell_volume();
    for (i, v) in data.iter_mut().enumerate() {
        *v *= vol * parity_sign(grid, i);
    }
    Ok(ComplexField {
        grid: grid.clone(),
        data,
        representation: Representation::Fourier,
        shift: f.shift.clone(),
    })
}

/// Fourier -> physical, inverse of [`fft_forward`].
pub fn fft_inverse(f: &ComplexField) -> Result<ComplexField> {
    f.require(Representation::Fourier)?;
    let grid = &f.grid;
    let mut data = f.data.clone();
    let scale = 1.0 / (2.0 * grid.half_width).powi(grid.n as i32);
    for (i, v) in data.iter_mut().enumerate() {
        *v *= scale * parity_sign(grid, i);
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(grid.points_per_axis);
    axis_transform(&mut data, grid.n, grid.points_per_axis, fft.as_ref());
    modulate(grid, &mut data, &f.shift, 1.0);
    Ok(ComplexField {
        grid: grid.clone(),
        data,
        representation: Representation::Physical,
        shift: f.shift.clone(),
    })
}

/// Weight exponent and Lebesgue exponent of a (weighted) norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormSpec {
    pub sigma: f64,
    pub p: f64,
}

impl WeightedNormSpec {
    pub fn lp(p: f64) -> Self {
        Self { sigma: 0.0, p }
    }

    /// `L^2_sigma` with weight `(1+|x|^2)^sigma`.
    pub fn weighted_l2(sigma: f64) -> Self {
        Self { sigma, p: 2.0 }
    }
}

/// `(int (1+|x|^2)^{sigma p/2} |f|^p dx)^{1/p}`, or the weighted max for `p = inf`.
pub fn norm(f: &ComplexField, spec: WeightedNormSpec) -> Result<f64> {
    f.require(Representation::Physical)?;
    if spec.p.is_nan() || spec.p < 1.0 {
        return Err(Error::InvalidExponent(spec.p));
    }
    let grid = &f.grid;
    let mut x = vec![0.0; grid.n];
    let weight = |x: &[f64]| -> f64 {
        if spec.sigma == 0.0 {
            1.0
        } else {
            (1.0 + x.iter().map(|v| v * v).sum::<f64>()).powf(0.5 * spec.sigma)
        }
    };
    if spec.p.is_infinite() {
        let mut best = 0.0f64;
        for (i, v) in f.data.iter().enumerate() {
            grid.point(i, &mut x);
            best = best.max(weight(&x) * v.norm());
        }
        return Ok(best);
    }
    // scale by the max to keep |f|^p in range for large p
    let peak = f.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (i, v) in f.data.iter().enumerate() {
        let a = v.norm();
        if a == 0.0 {
            continue;
        }
        grid.point(i, &mut x);
        sum += (weight(&x) * a / peak).powf(spec.p);
    }
    Ok(peak * (sum * grid.cell_volume()).powf(1.0 / spec.p))
}

/// `(-Delta - 2 zeta.grad)^m w`, evaluated as the Fourier multiplier `p_zeta(xi)^m`
/// at the field's (possibly shifted) frequency lattice.
pub fn apply_conjugated_op(w: &ComplexField, zeta: &ZetaVector, m: usize) -> Result<ComplexField> {
    let mut hat = fft_forward(w)?;
    let grid = hat.grid.clone();
    let mut xi = vec![0.0; grid.n];
    let shift = hat.shift.clone();
    for (i, v) in hat.data.iter_mut().enumerate() {
        grid.frequency(i, &shift, &mut xi);
        *v *= symbol_raw(&zeta.raw, &xi).powu(m as u32);
    }
    fft_inverse(&hat)
}

/// `(-Delta)^m w` as a Fourier multiplier `|xi|^{2m}`.
pub fn apply_polyharmonic(w: &ComplexField, m: usize) -> Result<ComplexField> {
    let mut hat = fft_forward(w)?;
    let grid = hat.grid.clone();
    let mut xi = vec![0.0; grid.n];
    let shift = hat.shift.clone();
    for (i, v) in hat.data.iter_mut().enumerate() {
        grid.frequency(i, &shift, &mut xi);
        let k2: f64 = xi.iter().map(|a| a * a).sum();
        *v *= k2.powi(m as i32);
    }
    fft_inverse(&hat)
}
