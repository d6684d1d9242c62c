//! Complex geometrical optics solutions `u = e^{x.zeta}(1 + r)` of
//! `((-Delta)^m + q) u = 0`, built from the Neumann series of
//! `(I + d_2 G d_1) v = -d_2` with `q = d_1 d_2`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::carleman::bump;
use crate::error::{Error, Result};
use crate::field::{
    apply_conjugated_op, fft_forward, fft_inverse, norm, ComplexField, GridSpec, WeightedNormSpec,
};
use crate::green::{fit_slope, GreenOperator};
use crate::symbol::ZetaVector;

/// Potential with its factorization `d_1 = |q|^{1/2}`, `d_2 = q / |q|^{1/2}`.
#[derive(Debug, Clone)]
pub struct Potential {
    pub q: ComplexField,
    pub d1: ComplexField,
    pub d2: ComplexField,
}

/// Cells at the box boundary on which `q` must vanish.
pub const SUPPORT_MARGIN: usize = 4;

impl Potential {
    pub fn new(q: ComplexField) -> Result<Self> {
        if !q.is_physical() {
            return Err(Error::Contract("potential must be physical".into()));
        }
        let grid = q.grid.clone();
        let np = grid.points_per_axis;
        let mut idx = vec![0usize; grid.n];
        for (i, v) in q.data.iter().enumerate() {
            if *v == C64::new(0.0, 0.0) {
                continue;
            }
            grid.unflatten(i, &mut idx);
            if idx
                .iter()
                .any(|&k| k < SUPPORT_MARGIN || k >= np - SUPPORT_MARGIN)
            {
                return Err(Error::Precondition(format!(
                    "potential must vanish within {SUPPORT_MARGIN} cells of the box boundary"
                )));
            }
        }
        let mut d1 = ComplexField::zeros(&grid);
        let mut d2 = ComplexField::zeros(&grid);
        for (i, v) in q.data.iter().enumerate() {
            let a = v.norm();
            if a > 0.0 {
                let r = a.sqrt();
                d1.data[i] = C64::new(r, 0.0);
                d2.data[i] = v / r;
            }
        }
        Ok(Self { q, d1, d2 })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.q.grid
    }

    pub fn is_zero(&self) -> bool {
        self.q.data.iter().all(|v| v.norm() == 0.0)
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::new(self.q.scale(C64::new(a, 0.0)))
    }
}

/// `height * e * bump(|x - c| / radius)`, a smooth bump with maximum `height`.
pub fn bump_potential(grid: &GridSpec, height: f64, radius: f64, center: &[f64]) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        let r = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        height * std::f64::consts::E * bump(r / radius)
    })
}

/// Truncation `d_{j,tau} = d_j 1_{|d_j| <= tau}`.
#[derive(Debug, Clone)]
pub struct TruncationScheme {
    pub tau: f64,
    pub d1: ComplexField,
    pub d2: ComplexField,
}

fn truncate_field(d: &ComplexField, tau: f64) -> ComplexField {
    let mut out = d.clone();
    out.data.iter_mut().for_each(|v| {
        if v.norm() > tau {
            *v = C64::new(0.0, 0.0);
        }
    });
    out
}

pub fn truncate(p: &Potential, tau: f64) -> TruncationScheme {
    TruncationScheme {
        tau,
        d1: truncate_field(&p.d1, tau),
        d2: truncate_field(&p.d2, tau),
    }
}

/// `||d_j - d_{j,tau}||_{n/m}`; the same for both factors since `|d_1| = |d_2|`.
pub fn truncation_tail(p: &Potential, tau: f64) -> Result<f64> {
    let mut tail = p.d1.clone();
    tail.data.iter_mut().for_each(|v| {
        if v.norm() <= tau {
            *v = C64::new(0.0, 0.0);
        }
    });
    let g = p.grid();
    norm(&tail, WeightedNormSpec::lp(g.n as f64 / g.m as f64))
}

/// Smallest `tau` among the values of `|d_j|` with tail at most `frac` of `||d_j||_{n/m}`.
pub fn default_tau(p: &Potential, frac: f64) -> Result<f64> {
    let g = p.grid();
    let e = g.n as f64 / g.m as f64;
    let mut mags: Vec<f64> =
        p.d1.data
            .iter()
            .map(|v| v.norm())
            .filter(|a| *a > 0.0)
            .collect();
    if mags.is_empty() {
        return Ok(0.0);
    }
    mags.sort_by(f64::total_cmp);
    let total: f64 = mags.iter().map(|a| a.powf(e)).sum();
    let budget = frac.powf(e) * total;
    // walk down from the top while the discarded mass stays within budget
    let mut tail = 0.0;
    let mut tau = *mags.last().unwrap();
    for k in (0..mags.len()).rev() {
        let next = tail + mags[k].powf(e);
        if next > budget {
            break;
        }
        tail = next;
        tau = if k == 0 { 0.0 } else { mags[k - 1] };
    }
    Ok(tau)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CgoConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub s_min: f64,
    /// Half-width of the central box `K`; `None` means half the domain half-width.
    pub k_half_width: Option<f64>,
}

impl Default for CgoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            s_min: 2.0,
            k_half_width: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgoSolution {
    pub zeta: ZetaVector,
    pub v: ComplexField,
    pub r: ComplexField,
    pub iterations: usize,
    pub converged: bool,
    /// Relative L^2 update per iteration.
    pub history: Vec<f64>,
    /// Observed ratio of successive updates (largest of the last three).
    pub contraction: f64,
    /// `||v + d_2 + d_2 G(d_1 v)||_2 / ||d_2||_2`.
    pub fixed_point_residual: f64,
    /// `||(-Delta - 2 zeta.grad)^m r + q (1 + r)||_{p} / ||q||_{p}`, `p = 2n/(n+2m)`.
    pub equation_residual: f64,
    pub r_norm_q: f64,
    pub r_norm_k: f64,
    pub below_s_min: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CgoDiagnostics {
    pub s: f64,
    pub iterations: usize,
    pub converged: bool,
    pub contraction: f64,
    pub fixed_point_residual: f64,
    pub equation_residual: f64,
    pub r_norm_q: f64,
    pub r_norm_k: f64,
    pub below_s_min: bool,
    pub history: Vec<f64>,
}

impl CgoSolution {
    pub fn diagnostics(&self) -> CgoDiagnostics {
        CgoDiagnostics {
            s: self.zeta.s,
            iterations: self.iterations,
            converged: self.converged,
            contraction: self.contraction,
            fixed_point_residual: self.fixed_point_residual,
            equation_residual: self.equation_residual,
            r_norm_q: self.r_norm_q,
            r_norm_k: self.r_norm_k,
            below_s_min: self.below_s_min,
            history: self.history.clone(),
        }
    }

    /// `e^{x.zeta} (1 + r(x))` at a grid point.
    pub fn u_at(&self, flat: usize) -> C64 {
        let g = &self.r.grid;
        let mut x = vec![0.0; g.n];
        g.point(flat, &mut x);
        let phase: C64 = x.iter().zip(&self.zeta.raw).map(|(a, z)| z * a).sum();
        phase.exp() * (C64::new(1.0, 0.0) + self.r.data[flat])
    }
}

fn pointwise(a: &ComplexField, b: &ComplexField) -> ComplexField {
    let mut out = ComplexField::zeros(&a.grid);
    for (o, (x, y)) in out.data.iter_mut().zip(a.data.iter().zip(&b.data)) {
        *o = x * y;
    }
    out
}

/// `d_2 G(d_1 x)`.
fn sandwich(
    g: &GreenOperator,
    d1: &ComplexField,
    d2: &ComplexField,
    x: &ComplexField,
) -> Result<ComplexField> {
    Ok(pointwise(d2, &g.apply(&pointwise(d1, x))?))
}

fn conj(f: &ComplexField) -> ComplexField {
    let mut out = f.clone();
    out.data.iter_mut().for_each(|v| *v = v.conj());
    out
}

/// `L^2` norm over the central box `|x_i| <= a`.
pub fn l2_on_box(f: &ComplexField, a: f64) -> f64 {
    let g = &f.grid;
    let mut x = vec![0.0; g.n];
    let mut sum = 0.0;
    for (i, v) in f.data.iter().enumerate() {
        g.point(i, &mut x);
        if x.iter().all(|c| c.abs() <= a) {
            sum += v.norm_sqr();
        }
    }
    (sum * g.cell_volume()).sqrt()
}

/// Solves for the CGO remainder by fixed-point iteration.
pub fn build_cgo(q: &Potential, g: &GreenOperator, config: &CgoConfig) -> Result<CgoSolution> {
    let grid = q.grid().clone();
    if !grid.same_geometry(&g.grid) {
        return Err(Error::GridMismatch);
    }
    let (n, m) = (grid.n, g.m);
    if n <= 2 * m {
        return Err(Error::DimensionOrder { n, m });
    }
    let d2norm = q.d2.l2();
    let mut v = q.d2.scale(C64::new(-1.0, 0.0));
    let mut history = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut converged = d2norm == 0.0;
    let mut streak = 0;
    let mut prev_update = f64::NAN;
    let mut iterations = 0;
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let gv = sandwich(g, &q.d1, &q.d2, &v)?;
        let mut next = ComplexField::zeros(&grid);
        for (o, (a, b)) in next.data.iter_mut().zip(q.d2.data.iter().zip(&gv.data)) {
            *o = -a - b;
        }
        let step = next.sub(&v)?.l2();
        let vn = next.l2();
        if !step.is_finite() || !vn.is_finite() {
            return Err(Error::SeriesDiverged {
                factor: f64::INFINITY,
            });
        }
        let rel = if vn > 0.0 { step / vn } else { 0.0 };
        history.push(rel);
        if prev_update.is_finite() && prev_update > 0.0 {
            let factor = step / prev_update;
            ratios.push(factor);
            if factor >= 1.0 {
                streak += 1;
                if streak >= 5 {
                    return Err(Error::SeriesDiverged { factor });
                }
            } else {
                streak = 0;
            }
        }
        prev_update = step;
        v = next;
        converged = rel < config.tol;
    }
    let contraction = ratios.iter().rev().take(3).cloned().fold(0.0, f64::max);

    let r = g.apply(&pointwise(&q.d1, &v))?;
    let gv = pointwise(&q.d2, &r);
    let mut fp = ComplexField::zeros(&grid);
    for (o, ((a, b), c)) in fp
        .data
        .iter_mut()
        .zip(v.data.iter().zip(&q.d2.data).zip(&gv.data))
    {
        *o = a + b + c;
    }
    let fixed_point_residual = if d2norm > 0.0 { fp.l2() / d2norm } else { 0.0 };

    let p_dual = 2.0 * n as f64 / (n + 2 * m) as f64;
    let p_rem = 2.0 * n as f64 / (n - 2 * m) as f64;
    let equation_residual = if d2norm > 0.0 {
        let pr = apply_conjugated_op(&r, &g.zeta, m)?;
        let mut res = ComplexField::zeros(&grid);
        for (o, ((a, qv), rv)) in res
            .data
            .iter_mut()
            .zip(pr.data.iter().zip(&q.q.data).zip(&r.data))
        {
            *o = a + qv * (C64::new(1.0, 0.0) + rv);
        }
        norm(&res, WeightedNormSpec::lp(p_dual))? / norm(&q.q, WeightedNormSpec::lp(p_dual))?
    } else {
        0.0
    };
    let mut r_plain = r.clone();
    r_plain.shift = vec![0.0; n];
    let r_norm_q = norm(&r_plain, WeightedNormSpec::lp(p_rem))?;
    let k = config.k_half_width.unwrap_or(0.5 * grid.half_width);
    let r_norm_k = l2_on_box(&r, k);
    Ok(CgoSolution {
        zeta: g.zeta.clone(),
        v,
        r,
        iterations,
        converged,
        history,
        contraction,
        fixed_point_residual,
        equation_residual,
        r_norm_q,
        r_norm_k,
        below_s_min: g.zeta.s < config.s_min,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OperatorNormReport {
    /// `(s, ||d_2 G d_1||, ||d_{2,tau} G d_{1,tau}||)`.
    pub rows: Vec<(f64, f64, f64)>,
    pub tau: f64,
    pub decreasing: bool,
    /// Log-log slope of the truncated part against `s`.
    pub slope: f64,
    pub passed: bool,
}

/// Power-iteration estimate of `||d_2 G d_1||_{L^2 -> L^2}`.
pub fn operator_norm(
    g: &GreenOperator,
    d1: &ComplexField,
    d2: &ComplexField,
    iters: usize,
) -> Result<f64> {
    let grid = d1.grid.clone();
    let mut x = ComplexField::from_fn(&grid, |y| {
        C64::new(1.0 + 0.3 * y[0].sin(), 0.2 * y.iter().sum::<f64>().cos())
    });
    let mut x0 = x.l2();
    if d1.max_abs() == 0.0 || d2.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let (c1, c2) = (conj(d1), conj(d2));
    let mut est = 0.0;
    for _ in 0..iters {
        x = x.scale(C64::new(1.0 / x0, 0.0));
        let ax = sandwich(g, d1, d2, &x)?;
        let atax = pointwise(&c1, &g.apply_adjoint(&pointwise(&c2, &ax))?);
        let nrm = atax.l2();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        est = nrm.sqrt();
        x = atax;
        x0 = nrm;
    }
    Ok(est)
}

/// Sweeps the norm of `d_2 G d_1` and of its truncated bounded part over the family.
pub fn probe_operator_norm(
    q: &Potential,
    family: &[GreenOperator],
    tau: Option<f64>,
) -> Result<OperatorNormReport> {
    let tau = match tau {
        Some(t) => t,
        None => default_tau(q, 0.05)?,
    };
    let tr = truncate(q, tau);
    let mut rows = Vec::new();
    for g in family {
        let full = operator_norm(g, &q.d1, &q.d2, 30)?;
        let part = operator_norm(g, &tr.d1, &tr.d2, 30)?;
        rows.push((g.zeta.s, full, part));
    }
    let decreasing = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let positive = rows.iter().all(|r| r.2 > 0.0);
    let slope = if positive && rows.len() >= 2 {
        let lx: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.2.ln()).collect();
        fit_slope(&lx, &ly)
    } else {
        f64::NAN
    };
    let m = family.first().map(|g| g.m).unwrap_or(1) as f64;
    let passed = decreasing && (!positive || slope <= -m + 0.25);
    Ok(OperatorNormReport {
        rows,
        tau,
        decreasing,
        slope,
        passed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegularityReport {
    pub half_width: f64,
    pub hm_seminorm: f64,
    pub qu_norm: f64,
    /// Closed-form `|e^{x.zeta}|_{H^m}` on the sub-box, for comparison when `q = 0`.
    pub plane_wave_seminorm: f64,
}

/// Composite Simpson (or trapezoid) weights on the grid points with `|x| <= a`.
fn box_weights(grid: &GridSpec, a: f64) -> Result<Vec<f64>> {
    let h = grid.spacing();
    let np = grid.points_per_axis;
    let inside: Vec<usize> = (0..np)
        .filter(|&i| grid.coord(i).abs() <= a + 1e-12 * h)
        .collect();
    if inside.len() < 2 {
        return Err(Error::Contract(format!(
            "sub-box of half-width {a} contains fewer than two grid points per axis"
        )));
    }
    let mut w = vec![0.0; np];
    let k = inside.len() - 1;
    if k.is_multiple_of(2) {
        for (j, &i) in inside.iter().enumerate() {
            w[i] = h / 3.0
                * if j == 0 || j == k {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
        }
    } else {
        for (j, &i) in inside.iter().enumerate() {
            w[i] = h * if j == 0 || j == k { 0.5 } else { 1.0 };
        }
    }
    Ok(w)
}

/// All multi-indices of length `n` and order `m`.
fn multi_indices(n: usize, m: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for a in 0..=m {
        for mut rest in multi_indices(n - 1, m - a) {
            rest.insert(0, a);
            out.push(rest);
        }
    }
    out
}

/// Discrete `H^m` seminorm of `u = e^{x.zeta}(1 + r)` and `||q u||_{2n/(n+2m)}` on `[-a, a]^n`.
pub fn check_regularity(
    sol: &CgoSolution,
    q: &Potential,
    m: usize,
    a: f64,
) -> Result<RegularityReport> {
    let grid = sol.r.grid.clone();
    if !(a > 0.0) {
        return Err(Error::Contract("sub-box must have positive size".into()));
    }
    let w1 = box_weights(&grid, a)?;
    let n = grid.n;
    let zeta = &sol.zeta.raw;
    let mut rhat = fft_forward(&sol.r)?;
    // w = 1 + r on the shifted lattice: the constant lives at the unshifted origin,
    // so derivatives of 1 are added analytically below.
    let mut total = 0.0;
    let mut xi = vec![0.0; n];
    let base = rhat.clone();
    for alpha in multi_indices(n, m) {
        // prod_j (zeta_j + d_j)^{alpha_j} applied to r spectrally and to 1 exactly
        for (flat, v) in rhat.data.iter_mut().enumerate() {
            grid.frequency(flat, &base.shift, &mut xi);
            let mut f = C64::new(1.0, 0.0);
            for j in 0..n {
                f *= (zeta[j] + C64::new(0.0, xi[j])).powu(alpha[j] as u32);
            }
            *v = base.data[flat] * f;
        }
        let dr = fft_inverse(&rhat)?;
        let mut one = C64::new(1.0, 0.0);
        for j in 0..n {
            one *= zeta[j].powu(alpha[j] as u32);
        }
        let mut x = vec![0.0; n];
        let mut idx = vec![0usize; n];
        let mut sum = 0.0;
        for (flat, d) in dr.data.iter().enumerate() {
            grid.unflatten(flat, &mut idx);
            let wt: f64 = idx.iter().map(|&i| w1[i]).product();
            if wt == 0.0 {
                continue;
            }
            grid.point(flat, &mut x);
            let growth: f64 = x
                .iter()
                .zip(zeta)
                .map(|(p, z)| 2.0 * p * z.re)
                .sum::<f64>()
                .exp();
            sum += wt * growth * (d + one).norm_sqr();
        }
        total += sum;
    }
    let hm = total.sqrt();
    let p_dual = 2.0 * n as f64 / (n + 2 * m) as f64;
    let mut qu = ComplexField::zeros(&grid);
    let mut x = vec![0.0; n];
    for (flat, o) in qu.data.iter_mut().enumerate() {
        grid.point(flat, &mut x);
        if x.iter().all(|c| c.abs() <= a) {
            *o = q.q.data[flat] * sol.u_at(flat);
        }
    }
    let qu_norm = norm(&qu, WeightedNormSpec::lp(p_dual))?;
    // closed form for the plane wave: sum_alpha |zeta^alpha|^2 int e^{2 x.Re zeta}
    let mut coef = 0.0;
    for alpha in multi_indices(n, m) {
        let mut f = 1.0;
        for j in 0..n {
            f *= zeta[j].norm_sqr().powi(alpha[j] as i32);
        }
        coef += f;
    }
    let integral: f64 = zeta
        .iter()
        .map(|z| {
            if z.re == 0.0 {
                2.0 * a
            } else {
                (2.0 * a * z.re).sinh() / z.re
            }
        })
        .product();
    let plane = (coef * integral).sqrt();
    if !hm.is_finite() || !qu_norm.is_finite() {
        return Err(Error::Numerical("non-finite regularity norms".into()));
    }
    Ok(RegularityReport {
        half_width: a,
        hm_seminorm: hm,
        qu_norm,
        plane_wave_seminorm: plane,
    })
}
