//! Empirical constants of the L^p Carleman estimates for `(-Delta)^m` with
//! linear weights `e^{k.x}` and logarithmic weights `|x|^{-t}`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{apply_polyharmonic, ComplexField, GridSpec};

/// `delta` below this is reported as a blow-up case.
pub const DELTA_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Weight {
    Log { t: f64 },
    Linear { k: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanConfig {
    pub n: usize,
    pub m: usize,
    pub weight: Weight,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reduced fraction `(num, den)`.
fn reduced(num: usize, den: usize) -> (usize, usize) {
    let g = gcd(num, den);
    (num / g, den / g)
}

impl CarlemanConfig {
    pub fn new(n: usize, m: usize, weight: Weight) -> Result<Self> {
        if m < 1 || 2 * m >= n {
            return Err(Error::DimensionOrder { n, m });
        }
        if let Weight::Linear { k } = &weight {
            if k.len() != n {
                return Err(Error::Contract(format!(
                    "weight vector has length {} != n = {n}",
                    k.len()
                )));
            }
        }
        Ok(Self { n, m, weight })
    }

    /// `p = 2n/(n+2m)` as a reduced fraction.
    pub fn p_exact(&self) -> (usize, usize) {
        reduced(2 * self.n, self.n + 2 * self.m)
    }

    /// `q = 2n/(n-2m)` as a reduced fraction.
    pub fn q_exact(&self) -> (usize, usize) {
        reduced(2 * self.n, self.n - 2 * self.m)
    }

    /// `1/p - 1/q == 2m/n`, compared in integers.
    pub fn exponents_consistent(&self) -> bool {
        let (pn, pd) = self.p_exact();
        let (qn, qd) = self.q_exact();
        // pd/pn - qd/qn = (pd qn - qd pn) / (pn qn)
        let lhs_num = (pd * qn) as i64 - (qd * pn) as i64;
        let lhs_den = (pn * qn) as i64;
        lhs_num * self.n as i64 == 2 * self.m as i64 * lhs_den
    }

    pub fn p(&self) -> f64 {
        let (a, b) = self.p_exact();
        a as f64 / b as f64
    }

    pub fn q(&self) -> f64 {
        let (a, b) = self.q_exact();
        a as f64 / b as f64
    }

    /// `dist(t - n/q, Z)` for a log weight.
    pub fn delta(&self) -> Option<f64> {
        match self.weight {
            Weight::Log { t } => {
                let x = t - self.n as f64 / self.q();
                Some((x - x.round()).abs())
            }
            Weight::Linear { .. } => None,
        }
    }
}

/// One CSV row of a probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlemanRow {
    pub weight_type: String,
    pub parameter: f64,
    pub sample_id: usize,
    pub ratio: f64,
}

/// `log ||e^{phi} g||_p` over the points where `mask` holds, computed with the
/// maximum of `phi + log|g|` factored out.
fn log_weighted_norm(g: &[C64], phi: &[f64], mask: &[bool], p: f64, cell: f64) -> f64 {
    let logs: Vec<f64> = g
        .iter()
        .zip(phi)
        .zip(mask)
        .map(|((v, w), &keep)| {
            if keep && v.norm() > 0.0 {
                v.norm().ln() + w
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = logs.iter().map(|l| (p * (l - top)).exp()).sum();
    top + (sum * cell).ln() / p
}

/// Ratio `||w u||_q / ||w (-Delta)^m u||_p` for a weight with logarithm `phi`,
/// or `None` when the denominator is degenerate.
fn weighted_ratio(
    cfg: &CarlemanConfig,
    u: &ComplexField,
    lap: &ComplexField,
    phi: &[f64],
) -> Option<f64> {
    let support: Vec<bool> = u.data.iter().map(|v| v.norm() > 0.0).collect();
    let cell = u.grid.cell_volume();
    let num = log_weighted_norm(&u.data, phi, &support, cfg.q(), cell);
    let den = log_weighted_norm(&lap.data, phi, &support, cfg.p(), cell);
    let plain = log_weighted_norm(&lap.data, &vec![0.0; phi.len()], &support, cfg.p(), cell);
    if !den.is_finite() || plain < (1e-14f64).ln() {
        return None;
    }
    Some((num - den).exp())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearProbeReport {
    pub rows: Vec<CarlemanRow>,
    /// Largest ratio over samples and weights.
    pub constant: f64,
    /// Per sample, max/min of the ratio across the k-list.
    pub spread: Vec<f64>,
    pub skipped: Vec<String>,
}

/// Sweeps `||e^{k.x} u||_q / ||e^{k.x} (-Delta)^m u||_p` over `k_list` and samples.
///
/// `(-Delta)^m u` is computed spectrally and restricted to `supp u`, which
/// removes round-off leaking outside the support before it meets `e^{k.x}`.
pub fn probe_linear(
    n: usize,
    m: usize,
    k_list: &[Vec<f64>],
    samples: &[ComplexField],
) -> Result<LinearProbeReport> {
    let base = CarlemanConfig::new(n, m, Weight::Linear { k: vec![0.0; n] })?;
    for k in k_list {
        if k.len() != n {
            return Err(Error::Contract(
                "weight vector length differs from n".into(),
            ));
        }
    }
    let results: Vec<Result<(Vec<CarlemanRow>, Vec<String>, Option<f64>)>> = samples
        .par_iter()
        .enumerate()
        .map(|(id, u)| {
            let mut rows = Vec::new();
            let mut skipped = Vec::new();
            if u.grid.n != n {
                return Err(Error::GridMismatch);
            }
            let lap = apply_polyharmonic(u, m)?;
            let mut x = vec![0.0; n];
            for k in k_list {
                let phi: Vec<f64> = (0..u.grid.len())
                    .map(|i| {
                        u.grid.point(i, &mut x);
                        x.iter().zip(k).map(|(a, b)| a * b).sum()
                    })
                    .collect();
                let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                match weighted_ratio(&base, u, &lap, &phi) {
                    Some(r) => rows.push(CarlemanRow {
                        weight_type: "linear".into(),
                        parameter: kn,
                        sample_id: id,
                        ratio: r,
                    }),
                    None => {
                        skipped.push(format!("sample {id}, |k| = {kn}: degenerate denominator"))
                    }
                }
            }
            let spread = if rows.is_empty() {
                None
            } else {
                let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
                let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
                Some(max / min)
            };
            Ok((rows, skipped, spread))
        })
        .collect();
    let mut report = LinearProbeReport {
        rows: Vec::new(),
        constant: 0.0,
        spread: Vec::new(),
        skipped: Vec::new(),
    };
    for r in results {
        let (rows, skipped, spread) = r?;
        report.rows.extend(rows);
        report.skipped.extend(skipped);
        report.spread.extend(spread);
    }
    report.constant = report.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogProbeReport {
    pub t: f64,
    pub delta: f64,
    pub rows: Vec<CarlemanRow>,
    pub constant: f64,
    /// True when `delta < DELTA_THRESHOLD`: the constant is expected to blow up.
    pub delta_flagged: bool,
    pub skipped: Vec<String>,
}

/// Ratios `|| |x|^{-t} u ||_q / || |x|^{-t} (-Delta)^m u ||_p` for samples vanishing near 0.
pub fn probe_log(config: &CarlemanConfig, samples: &[ComplexField]) -> Result<LogProbeReport> {
    let t = match config.weight {
        Weight::Log { t } => t,
        Weight::Linear { .. } => {
            return Err(Error::Contract(
                "probe_log needs a logarithmic weight".into(),
            ))
        }
    };
    let delta = config.delta().expect("log weight");
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, u) in samples.iter().enumerate() {
        let grid = &u.grid;
        let guard = 4.0 * grid.spacing();
        let mut x = vec![0.0; grid.n];
        let mut phi = Vec::with_capacity(grid.len());
        for (i, v) in u.data.iter().enumerate() {
            grid.point(i, &mut x);
            let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if r < guard && v.norm() > 0.0 {
                return Err(Error::Precondition(format!(
                    "sample {id} is nonzero within {guard} of the origin"
                )));
            }
            phi.push(if r > 0.0 { -t * r.ln() } else { 0.0 });
        }
        let lap = apply_polyharmonic(u, config.m)?;
        match weighted_ratio(config, u, &lap, &phi) {
            Some(r) => rows.push(CarlemanRow {
                weight_type: "log".into(),
                parameter: t,
                sample_id: id,
                ratio: r,
            }),
            None => skipped.push(format!("sample {id}: degenerate denominator")),
        }
    }
    let constant = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(LogProbeReport {
        t,
        delta,
        rows,
        constant,
        delta_flagged: delta < DELTA_THRESHOLD,
        skipped,
    })
}

/// `exp(-1/(1 - r^2))` for `r < 1`, else 0.
pub fn bump(r: f64) -> f64 {
    if r.abs() < 1.0 {
        (-1.0 / (1.0 - r * r)).exp()
    } else {
        0.0
    }
}

/// Radial bump of the given radius centred at `center`.
pub fn radial_bump(grid: &GridSpec, center: &[f64], radius: f64) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        let r = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        bump(r / radius)
    })
}

/// Product of one-dimensional bumps.
pub fn tensor_bump(grid: &GridSpec, center: &[f64], radius: f64) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        x.iter()
            .zip(center)
            .map(|(a, b)| bump((a - b) / radius))
            .product()
    })
}

/// Bump supported in the shell `r0 < |x| < r1`.
pub fn annular_bump(grid: &GridSpec, r0: f64, r1: f64) -> ComplexField {
    let mid = 0.5 * (r0 + r1);
    let half = 0.5 * (r1 - r0);
    ComplexField::from_real_fn(grid, |x| {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        bump((r - mid) / half)
    })
}

/// A few low-frequency random modes localized by a radial bump.
pub fn localized_random(grid: &GridSpec, radius: f64, modes: usize, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(Vec<f64>, f64, f64)> = (0..modes)
        .map(|_| {
            let k: Vec<f64> = (0..grid.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            (
                k,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    ComplexField::from_real_fn(grid, |x| {
        let r = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let env = bump(r / radius);
        if env == 0.0 {
            return 0.0;
        }
        let s: f64 = waves
            .iter()
            .map(|(k, a, ph)| a * (x.iter().zip(k).map(|(p, q)| p * q).sum::<f64>() + ph).cos())
            .sum();
        env * (1.0 + 0.5 * s)
    })
}

/// Unit vectors along the first axis with the given magnitudes.
pub fn axis_k_list(n: usize, magnitudes: &[f64]) -> Vec<Vec<f64>> {
    magnitudes
        .iter()
        .map(|&a| {
            let mut k = vec![0.0; n];
            k[0] = a;
            k
        })
        .collect()
}
