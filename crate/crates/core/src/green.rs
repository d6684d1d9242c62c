//! The Green operator `G_zeta^{(m)}`: a right inverse of
//! `(-Delta - 2 zeta.grad)^m` given by a regularized Fourier multiplier.
//!
//! Two backends are provided. `Naive` divides by `p_zeta^m` on a frequency
//! lattice offset so that it misses the characteristic set. `Paper` keeps the
//! smooth part `chi_1 / p_zeta^m` and, on each chart of the cover, resamples
//! `f^` onto a straightened `eta`-grid, multiplies by the chart kernel
//! `E^{(m,j)}` and pulls the result back to the frequency lattice.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    apply_conjugated_op, fft_forward, fft_inverse, norm, ComplexField, GridSpec, WeightedNormSpec,
};
use crate::interp::{lagrange_weights, stencil_start};
use crate::quadrature::gauss_legendre_on;
use crate::symbol::{
    build_partition, canonicalize, eval_symbol, ChartId, Diffeo, PartitionOfUnity, ZetaVector,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Naive,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenConfig {
    pub backend: Backend,
    /// Permit the naive backend for `m >= 2`, where `1/p^m` is not locally integrable.
    pub allow_unsafe: bool,
    /// Lagrange interpolation order of the chart resampling.
    pub interp_order: usize,
    /// Extra refinement of the `eta_j` grid relative to its default spacing.
    pub eta_refine: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Naive,
            allow_unsafe: false,
            interp_order: 3,
            eta_refine: 1.0,
        }
    }
}

impl GreenConfig {
    pub fn naive() -> Self {
        Self::default()
    }

    pub fn paper() -> Self {
        Self {
            backend: Backend::Paper,
            ..Self::default()
        }
    }
}

/// Distribution `E^{(m,j)} = (-1)^{m-1} / (s^m (m-1)!) d_{eta_j}^{m-1} (eta_j + i eta_1)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartKernel {
    pub id: ChartId,
    pub m: usize,
    pub s: f64,
}

impl ChartKernel {
    /// Pointwise value `1 / (s^m z^m)`, `z = eta_j + i eta_1`; exact away from `z = 0`.
    pub fn pointwise(&self, eta1: f64, etaj: f64) -> C64 {
        C64::new(1.0, 0.0) / (C64::new(etaj, eta1) * self.s).powu(self.m as u32)
    }

    /// `<E, 1_B> / |B|` for the box `B = [eta1 +- w1/2] x [etaj +- wj/2]`.
    ///
    /// For `m >= 2` the derivative is moved onto the indicator, which leaves a
    /// line integral of `z^{1-m}` over the two edges `eta_j = const`.
    pub fn cell_average(&self, eta1: f64, etaj: f64, w1: f64, wj: f64) -> C64 {
        if self.m == 1 {
            return self.pointwise(eta1, etaj);
        }
        let (t0, t1) = (eta1 - 0.5 * w1, eta1 + 0.5 * w1);
        let guard = 1e-12 * wj.max(w1);
        let nudge = |a: f64| if a.abs() < guard { guard } else { a };
        let a0 = nudge(etaj - 0.5 * wj);
        let a1 = nudge(etaj + 0.5 * wj);
        let k = self.m - 1;
        let line = |a: f64| -> C64 {
            // int_{t0}^{t1} (a + i t)^{-k} dt
            if k == 1 {
                let f = |t: f64| C64::new((t / a).atan(), -0.5 * (a * a + t * t).ln());
                f(t1) - f(t0)
            } else {
                let kf = k as f64;
                let f = |t: f64| C64::new(a, t).powf(1.0 - kf) / C64::new(0.0, 1.0 - kf);
                f(t1) - f(t0)
            }
        };
        let mf = self.m as f64;
        -(line(a1) - line(a0)) / (self.s.powi(self.m as i32) * (mf - 1.0) * w1 * wj)
    }

    /// `<E, psi> = 1/(s^m (m-1)!) int z^{-1} d_j^{m-1} psi` over the
    /// `(eta_1, eta_j)` plane, with `B_eps(0)` excised and the limit
    /// `eps -> 0` taken by Richardson extrapolation.
    ///
    /// `dpsi(eta1, etaj, k)` must return `d_{eta_j}^k psi`; `radius` bounds the support.
    pub fn action(&self, dpsi: &dyn Fn(f64, f64, usize) -> C64, radius: f64) -> C64 {
        let eps = 1e-3 * radius;
        let i1 = self.excised_integral(dpsi, eps, radius);
        let i2 = self.excised_integral(dpsi, 0.5 * eps, radius);
        let lim = (i2 * 4.0 - i1) / 3.0;
        let fact: f64 = (1..self.m).map(|v| v as f64).product();
        lim / (self.s.powi(self.m as i32) * fact)
    }

    fn excised_integral(
        &self,
        dpsi: &dyn Fn(f64, f64, usize) -> C64,
        eps: f64,
        radius: f64,
    ) -> C64 {
        let ntheta = 256;
        let panels = 96;
        let mut total = C64::new(0.0, 0.0);
        // geometric panels resolve the region near the excised disc
        let ratio = (radius / eps).powf(1.0 / panels as f64);
        let mut r0 = eps;
        for _ in 0..panels {
            let r1 = r0 * ratio;
            let (rs, ws) = gauss_legendre_on(12, r0, r1);
            for (r, wr) in rs.iter().zip(&ws) {
                let mut ring = C64::new(0.0, 0.0);
                for it in 0..ntheta {
                    let th = 2.0 * PI * it as f64 / ntheta as f64;
                    let (e1, ej) = (r * th.cos(), r * th.sin());
                    ring += dpsi(e1, ej, self.m - 1) / C64::new(ej, e1);
                }
                total += ring * (2.0 * PI / ntheta as f64) * r * *wr;
            }
            r0 = r1;
        }
        total
    }
}

/// Gaussian test function `a exp(-|eta - c|^2 / (2 w^2))` in the `(eta_1, eta_j)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTest {
    pub amplitude: f64,
    pub center: (f64, f64),
    pub width: f64,
}

/// Probabilists' Hermite polynomial `He_k`.
fn hermite_e(k: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for l in 1..k {
        let c = x * b - l as f64 * a;
        a = b;
        b = c;
    }
    b
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Checks `<E, s^m z^m phi> = int phi` on Gaussian test functions; returns the
/// largest relative error (absolute when `int phi = 0`).
pub fn verify_chart_kernel(m: usize, s: f64, tests: &[GaussianTest]) -> Result<f64> {
    if m < 1 {
        return Err(Error::Contract("m must be >= 1".into()));
    }
    let kernel = ChartKernel {
        id: ChartId {
            j: 2,
            sign: crate::symbol::Sign::Plus,
        },
        m,
        s,
    };
    let mut worst = 0.0f64;
    for t in tests {
        let (c1, cj) = t.center;
        let w = t.width;
        let phi_d = move |e1: f64, ej: f64, r: usize| -> f64 {
            let u1 = (e1 - c1) / w;
            let uj = (ej - cj) / w;
            t.amplitude
                * (-0.5 * (u1 * u1 + uj * uj)).exp()
                * (-1.0 / w).powi(r as i32)
                * hermite_e(r, uj)
        };
        let sm = s.powi(m as i32);
        let dpsi = move |e1: f64, ej: f64, k: usize| -> C64 {
            let z = C64::new(ej, e1);
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..=k.min(m) {
                let falling: f64 = ((m - l + 1)..=m).map(|v| v as f64).product();
                acc += z.powu((m - l) as u32) * (binom(k, l) * falling * phi_d(e1, ej, k - l));
            }
            acc * sm
        };
        let radius = (c1 * c1 + cj * cj).sqrt() + 12.0 * w;
        let lhs = kernel.action(&dpsi, radius);
        let rhs = 2.0 * PI * w * w * t.amplitude;
        let err = if rhs == 0.0 {
            lhs.norm()
        } else {
            (lhs - rhs).norm() / rhs.abs()
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone)]
struct LinePlan {
    /// Flat indices of the line nodes in ascending canonical `xi_j`.
    xi_flat: Vec<usize>,
    /// Per resampled `eta` node: first stencil position into `xi_flat`.
    resample_start: Vec<usize>,
    resample_w: Vec<f64>,
    /// Pulled-back nodes: flat index, first `eta` node (relative), weights, kernel factor.
    pull_flat: Vec<usize>,
    pull_start: Vec<usize>,
    pull_w: Vec<f64>,
    pull_factor: Vec<C64>,
}

#[derive(Debug, Clone)]
struct ChartPlan {
    id: ChartId,
    eta_step: f64,
    lines: Vec<LinePlan>,
}

#[derive(Debug, Clone)]
enum Assembled {
    Naive {
        mult: Vec<C64>,
    },
    Paper {
        chi1: Vec<C64>,
        charts: Vec<ChartPlan>,
    },
}

/// Assembled Green operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct GreenOperator {
    pub zeta: ZetaVector,
    pub m: usize,
    pub grid: GridSpec,
    pub config: GreenConfig,
    /// Bloch offset of the frequency lattice used by this operator.
    pub shift: Vec<f64>,
    assembled: Assembled,
}

/// `(pi / (2L)) Re zeta / |Re zeta|`: half a lattice step along the canonical `xi_1`.
pub fn sigma_avoiding_shift(zeta: &ZetaVector, grid: &GridSpec) -> Vec<f64> {
    let n = zeta.n();
    let half = 0.5 * grid.freq_step();
    (0..n).map(|a| half * zeta.rot(0, a)).collect()
}

pub fn assemble(
    zeta: &ZetaVector,
    m: usize,
    grid: &GridSpec,
    config: &GreenConfig,
) -> Result<GreenOperator> {
    if zeta.n() != grid.n {
        return Err(Error::GridMismatch);
    }
    if m < 1 {
        return Err(Error::Contract("m must be >= 1".into()));
    }
    let shift = sigma_avoiding_shift(zeta, grid);
    let partition = build_partition(zeta, grid.n)?;
    let assembled = match config.backend {
        Backend::Naive => {
            if m >= 2 && !config.allow_unsafe {
                return Err(Error::NotLocallyIntegrable { m });
            }
            Assembled::Naive {
                mult: assemble_naive(zeta, m, grid, &shift, &partition)?,
            }
        }
        Backend::Paper => assemble_paper(zeta, m, grid, &shift, &partition, config)?,
    };
    Ok(GreenOperator {
        zeta: zeta.clone(),
        m,
        grid: grid.clone(),
        config: config.clone(),
        shift,
        assembled,
    })
}

fn assemble_naive(
    zeta: &ZetaVector,
    m: usize,
    grid: &GridSpec,
    shift: &[f64],
    partition: &PartitionOfUnity,
) -> Result<Vec<C64>> {
    let mut xi = vec![0.0; grid.n];
    let mut mult = Vec::with_capacity(grid.len());
    for flat in 0..grid.len() {
        grid.frequency(flat, shift, &mut xi);
        let c = zeta.to_canonical(&xi);
        let pieces = partition.eval(&c);
        let p = eval_symbol(zeta, &c).powu(m as u32);
        let v = C64::new(pieces.total(), 0.0) / p;
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::Numerical(format!(
                "multiplier not finite at xi = {xi:?}"
            )));
        }
        mult.push(v);
    }
    Ok(mult)
}

fn assemble_paper(
    zeta: &ZetaVector,
    m: usize,
    grid: &GridSpec,
    shift: &[f64],
    partition: &PartitionOfUnity,
    config: &GreenConfig,
) -> Result<Assembled> {
    let perm = zeta.signed_permutation().ok_or_else(|| {
        Error::Unsupported("chart backend needs Re zeta and Im zeta along grid axes".into())
    })?;
    let n = grid.n;
    let np = grid.points_per_axis;
    let s = zeta.s;
    let dxi = grid.freq_step();
    let order = config.interp_order.max(1);
    if np < order + 1 {
        return Err(Error::Contract(
            "interpolation order exceeds grid size".into(),
        ));
    }
    let canon = |flat: usize, xi: &mut [f64], out: &mut [f64]| {
        grid.frequency(flat, shift, xi);
        for (i, &(a, sg)) in perm.iter().enumerate() {
            out[i] = sg * xi[a];
        }
    };

    let mut xi = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut chi1 = vec![C64::new(0.0, 0.0); grid.len()];
    for (flat, v) in chi1.iter_mut().enumerate() {
        canon(flat, &mut xi, &mut c);
        let x1 = partition.eval(&c).chi1;
        if x1 > 0.0 {
            *v = C64::new(x1, 0.0) / eval_symbol(zeta, &c).powu(m as u32);
        }
    }

    let lim = s / (2.0 * n as f64);
    let eta_step = (dxi * 2.0 * lim / s).min(0.5 * lim * lim / s) / config.eta_refine.max(1.0);
    let mut charts = Vec::new();
    for (ci, id) in partition.charts.iter().enumerate() {
        let diffeo = Diffeo::new(*id, s, n)?;
        let kernel = ChartKernel { id: *id, m, s };
        let (axis, sg) = perm[id.j - 1];
        let stride = np.pow((n - 1 - axis) as u32);
        let center = id.center(s);
        let mut lines = Vec::new();
        for base in 0..grid.len() {
            if !(base / stride).is_multiple_of(np) {
                continue;
            }
            // ascending canonical xi_j along this line
            let mut order_nodes: Vec<(f64, usize)> = (0..np)
                .map(|k| (sg * grid.folded(k) as f64 * dxi, base + k * stride))
                .collect();
            order_nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let x0 = order_nodes[0].0;
            let xmax = order_nodes[np - 1].0;
            let xi_flat: Vec<usize> = order_nodes.iter().map(|v| v.1).collect();

            let mut hits = Vec::new();
            for &f in &xi_flat {
                canon(f, &mut xi, &mut c);
                let w = partition.eval(&c).charts[ci];
                if w > 0.0 {
                    hits.push((f, w, c.clone()));
                }
            }
            if hits.is_empty() {
                continue;
            }
            let cref = &hits[0].2;
            let mut rest = cref[0] * cref[0];
            for l in 1..n {
                if l == id.j - 1 {
                    continue;
                }
                rest += if l == 1 {
                    (cref[l] - s).powi(2)
                } else {
                    cref[l] * cref[l]
                };
            }
            let rad_of = |i: i64| s * i as f64 * eta_step + s * s - rest;
            // admissible |xi_j - c| keeps xi_j inside the frequency box
            let (root_lo, root_hi) = if id.sign.value() > 0.0 {
                (x0 - center, xmax - center)
            } else {
                (center - xmax, center - x0)
            };
            let rad_min = (0.25 * lim * lim).max(root_lo.max(0.0).powi(2));
            let rad_max = root_hi.max(0.0).powi(2);
            let i_lo = ((rad_min + rest - s * s) / (s * eta_step)).ceil() as i64;
            let i_hi = ((rad_max + rest - s * s) / (s * eta_step)).floor() as i64;

            let mut pulls = Vec::with_capacity(hits.len());
            for (f, w, cc) in &hits {
                let eta = diffeo.forward_unchecked(cc);
                let ej = eta[id.j - 1];
                let start =
                    stencil_start(ej, 0.0, eta_step, order, i_lo, i_hi).ok_or_else(|| {
                        Error::Coverage(format!("chart {id:?}: no eta stencil for eta_j = {ej}"))
                    })?;
                let wts = lagrange_weights(ej, 0.0, eta_step, start, order);
                let jj = 2.0 * (cc[id.j - 1] - center).abs() / s;
                let factor = kernel.cell_average(eta[0], ej, 2.0 * dxi, jj * dxi) * *w;
                pulls.push((*f, start, wts, factor));
            }
            let first = pulls.iter().map(|p| p.1).min().unwrap();
            let last = pulls.iter().map(|p| p.1).max().unwrap() + order as i64;

            let mut resample_start = Vec::new();
            let mut resample_w = Vec::new();
            for i in first..=last {
                let rad = rad_of(i);
                if rad < 0.0 {
                    return Err(Error::Coverage(format!(
                        "chart {id:?}: eta node {i} outside the image"
                    )));
                }
                let xj = center + id.sign.value() * rad.sqrt();
                if xj < x0 - 1e-12 || xj > xmax + 1e-12 {
                    return Err(Error::Coverage(format!(
                        "chart {id:?}: xi_j = {xj} beyond the frequency box"
                    )));
                }
                let st = stencil_start(xj, x0, dxi, order, 0, np as i64 - 1).expect("np > order");
                resample_start.push(st as usize);
                resample_w.extend(lagrange_weights(xj, x0, dxi, st, order));
            }
            let mut plan = LinePlan {
                xi_flat,
                resample_start,
                resample_w,
                pull_flat: Vec::with_capacity(pulls.len()),
                pull_start: Vec::with_capacity(pulls.len()),
                pull_w: Vec::with_capacity(pulls.len() * (order + 1)),
                pull_factor: Vec::with_capacity(pulls.len()),
            };
            for (f, st, wts, factor) in pulls {
                plan.pull_flat.push(f);
                plan.pull_start.push((st - first) as usize);
                plan.pull_w.extend(wts);
                plan.pull_factor.push(factor);
            }
            lines.push(plan);
        }
        charts.push(ChartPlan {
            id: *id,
            eta_step,
            lines,
        });
    }
    Ok(Assembled::Paper { chi1, charts })
}

impl GreenOperator {
    /// Frequency-domain multiplication of `G` on an already transformed field.
    fn apply_hat(&self, fhat: &[C64]) -> Vec<C64> {
        match &self.assembled {
            Assembled::Naive { mult } => fhat.iter().zip(mult).map(|(a, b)| a * b).collect(),
            Assembled::Paper { chi1, charts } => {
                let order = self.config.interp_order.max(1);
                let npts = order + 1;
                let mut out: Vec<C64> = fhat.iter().zip(chi1).map(|(a, b)| a * b).collect();
                let mut g = Vec::new();
                for chart in charts {
                    for line in &chart.lines {
                        g.clear();
                        for (i, &st) in line.resample_start.iter().enumerate() {
                            let w = &line.resample_w[i * npts..(i + 1) * npts];
                            let v: C64 = w
                                .iter()
                                .enumerate()
                                .map(|(k, wk)| fhat[line.xi_flat[st + k]] * wk)
                                .sum();
                            g.push(v);
                        }
                        for (p, &flat) in line.pull_flat.iter().enumerate() {
                            let st = line.pull_start[p];
                            let w = &line.pull_w[p * npts..(p + 1) * npts];
                            let v: C64 = w.iter().enumerate().map(|(k, wk)| g[st + k] * wk).sum();
                            out[flat] += v * line.pull_factor[p];
                        }
                    }
                }
                out
            }
        }
    }

    /// Conjugate transpose of [`Self::apply_hat`].
    fn apply_hat_adjoint(&self, yhat: &[C64]) -> Vec<C64> {
        match &self.assembled {
            Assembled::Naive { mult } => yhat.iter().zip(mult).map(|(a, b)| a * b.conj()).collect(),
            Assembled::Paper { chi1, charts } => {
                let npts = self.config.interp_order.max(1) + 1;
                let mut out: Vec<C64> = yhat.iter().zip(chi1).map(|(a, b)| a * b.conj()).collect();
                let mut g = Vec::new();
                for chart in charts {
                    for line in &chart.lines {
                        g.clear();
                        g.resize(line.resample_start.len(), C64::new(0.0, 0.0));
                        for (p, &flat) in line.pull_flat.iter().enumerate() {
                            let st = line.pull_start[p];
                            let y = yhat[flat] * line.pull_factor[p].conj();
                            for (k, wk) in line.pull_w[p * npts..(p + 1) * npts].iter().enumerate()
                            {
                                g[st + k] += y * wk;
                            }
                        }
                        for (i, &st) in line.resample_start.iter().enumerate() {
                            for (k, wk) in
                                line.resample_w[i * npts..(i + 1) * npts].iter().enumerate()
                            {
                                out[line.xi_flat[st + k]] += g[i] * wk;
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn apply_with(&self, f: &ComplexField, adjoint: bool) -> Result<ComplexField> {
        if !self.grid.same_geometry(&f.grid) {
            return Err(Error::GridMismatch);
        }
        if !f.is_physical() {
            return Err(Error::Contract("apply expects a physical field".into()));
        }
        let tagged = f.clone().with_shift(self.shift.clone());
        let hat = fft_forward(&tagged)?;
        let data = if adjoint {
            self.apply_hat_adjoint(&hat.data)
        } else {
            self.apply_hat(&hat.data)
        };
        let mut out = hat;
        out.data = data;
        fft_inverse(&out)
    }

    /// `G^* f` with respect to the L^2 pairing, for `f` supported inside the box.
    pub fn apply_adjoint(&self, f: &ComplexField) -> Result<ComplexField> {
        self.apply_with(f, true)
    }

    /// `G f` for a physical field supported inside the box.
    pub fn apply(&self, f: &ComplexField) -> Result<ComplexField> {
        self.apply_with(f, false)
    }

    pub fn backend(&self) -> Backend {
        self.config.backend
    }

    /// Number of chart lines and pulled-back nodes; zero for the naive backend.
    pub fn chart_stats(&self) -> (usize, usize) {
        match &self.assembled {
            Assembled::Naive { .. } => (0, 0),
            Assembled::Paper { charts, .. } => {
                let lines = charts.iter().map(|c| c.lines.len()).sum();
                let nodes = charts
                    .iter()
                    .flat_map(|c| &c.lines)
                    .map(|l| l.pull_flat.len())
                    .sum();
                (lines, nodes)
            }
        }
    }

    /// Step of the straightened grid per chart.
    pub fn eta_steps(&self) -> Vec<(ChartId, f64)> {
        match &self.assembled {
            Assembled::Naive { .. } => Vec::new(),
            Assembled::Paper { charts, .. } => charts.iter().map(|c| (c.id, c.eta_step)).collect(),
        }
    }

    /// The stored multiplier of the naive backend.
    pub fn multiplier(&self) -> Option<&[C64]> {
        match &self.assembled {
            Assembled::Naive { mult } => Some(mult),
            Assembled::Paper { .. } => None,
        }
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "zeta": self.zeta.raw.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "m": self.m,
            "grid": self.grid,
            "backend": self.config.backend,
            "interp_order": self.config.interp_order,
            "shift": self.shift,
        })
    }
}

/// `||(-Delta - 2 zeta.grad)^m G f - f||_2 / ||f||_2`, 0 for `f = 0`.
pub fn verify_fundamental(g: &GreenOperator, f: &ComplexField) -> Result<f64> {
    let fnorm = f.l2();
    if fnorm == 0.0 {
        return Ok(0.0);
    }
    let w = g.apply(f)?;
    let back = apply_conjugated_op(&w, &g.zeta, g.m)?;
    let mut diff = back;
    for (a, b) in diff.data.iter_mut().zip(&f.data) {
        *a -= b;
    }
    Ok(diff.l2() / fnorm)
}

/// Canonical `zeta = s e_1 - i s e_2` of dimension `n`.
pub fn canonical_zeta(n: usize, s: f64) -> Result<ZetaVector> {
    let mut raw = vec![C64::new(0.0, 0.0); n];
    raw[0] = C64::new(s, 0.0);
    raw[1] = C64::new(0.0, -s);
    canonicalize(&raw)
}

/// Operators for the canonical `zeta` at each `s`.
pub fn s_family(
    grid: &GridSpec,
    m: usize,
    s_list: &[f64],
    config: &GreenConfig,
) -> Result<Vec<GreenOperator>> {
    s_list
        .iter()
        .map(|&s| assemble(&canonical_zeta(grid.n, s)?, m, grid, config))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayReport {
    pub sigma: f64,
    pub m: usize,
    /// `(s, ||G f||_{L^2_sigma})`.
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
    pub passed: bool,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let nf = x.len() as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sweeps `||G f||_{L^2_sigma}` over the operator family and fits its power law in `s`.
pub fn probe_weighted_decay(
    family: &[GreenOperator],
    f: &ComplexField,
    sigma: f64,
) -> Result<DecayReport> {
    let m = family
        .first()
        .map(|g| g.m)
        .ok_or_else(|| Error::Contract("empty operator family".into()))?;
    let mf = m as f64;
    if !(sigma > -mf && sigma < 1.0 - mf) {
        return Err(Error::InvalidSigma { sigma, m });
    }
    let mut rows = Vec::new();
    for g in family {
        let w = g.apply(f)?;
        rows.push((g.zeta.s, norm(&w, WeightedNormSpec::weighted_l2(sigma))?));
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    let slope = fit_slope(&lx, &ly);
    Ok(DecayReport {
        sigma,
        m,
        rows,
        slope,
        passed: slope <= -mf + 0.25,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpBoundReport {
    pub p_in: f64,
    pub p_out: f64,
    /// `(s, ||G f||_{p_out} / ||f||_{p_in})`.
    pub rows: Vec<(f64, f64)>,
    pub max_over_min: f64,
    pub passed: bool,
    pub notice: Option<String>,
}

/// Ratios `||G f||_{2n/(n-2m)} / ||f||_{2n/(n+2m)}` across the family.
pub fn probe_lp_bound(family: &[GreenOperator], f: &ComplexField) -> Result<LpBoundReport> {
    let g0 = family
        .first()
        .ok_or_else(|| Error::Contract("empty operator family".into()))?;
    let (n, m) = (g0.grid.n, g0.m);
    if n <= 2 * m {
        return Err(Error::DimensionOrder { n, m });
    }
    let p_in = 2.0 * n as f64 / (n + 2 * m) as f64;
    let p_out = 2.0 * n as f64 / (n - 2 * m) as f64;
    let fnorm = norm(f, WeightedNormSpec::lp(p_in))?;
    if fnorm == 0.0 {
        return Ok(LpBoundReport {
            p_in,
            p_out,
            rows: Vec::new(),
            max_over_min: f64::NAN,
            passed: true,
            notice: Some("f = 0: ratio undefined, skipped".into()),
        });
    }
    let mut rows = Vec::new();
    for g in family {
        let w = g.apply(f)?;
        rows.push((g.zeta.s, norm(&w, WeightedNormSpec::lp(p_out))? / fnorm));
    }
    let max = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    Ok(LpBoundReport {
        p_in,
        p_out,
        rows,
        max_over_min: ratio,
        passed: ratio <= 3.0,
        notice: None,
    })
}
