//! Fourier-coefficient recovery of `q` from the pairing
//! `int q u_1 conj(u_2) = <(Lambda_q - Lambda_0) gamma u_1, conj(gamma u_2)>`
//! with CGO solutions at `zeta_1 + conj(zeta_2) = i xi`, so that
//! `u_1 conj(u_2) = e^{i x.xi} (1 + r_1)(1 + conj(r_2))`.
//!
//! Here `q^(xi) = int q e^{i x.xi} dx`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cgo::{build_cgo, CgoConfig, CgoDiagnostics, Potential};
use crate::error::{Error, Result};
use crate::field::{fft_forward, fft_inverse, ComplexField, GridSpec, Representation, C64};
use crate::forward::{project_trace, DnMap, GalerkinBasis};
use crate::green::{assemble, GreenConfig};
use crate::interp::sample_field;
use crate::symbol::{canonicalize_with_tol, ZetaVector};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Frame `zeta_1 = s eta_1 + i(xi/2 + r eta_2)`, `conj(zeta_2) = -s eta_1 + i(xi/2 - r eta_2)`.
#[derive(Debug, Clone)]
pub struct ZetaFrame {
    pub xi: Vec<f64>,
    pub s: f64,
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    pub r: f64,
    pub zeta1: ZetaVector,
    pub zeta2: ZetaVector,
}

/// Frame for `xi` at magnitude parameter `s`.
///
/// `eta_1, eta_2` are the first two survivors of Gram-Schmidt applied to
/// `xi/|xi|, e_1, e_2, ...` (to `e_1, e_2, ...` when `xi = 0`).
pub fn build_frame(xi: &[f64], s: f64) -> Result<ZetaFrame> {
    let n = xi.len();
    if n < 3 {
        return Err(Error::Contract(format!("frames need n >= 3, got {n}")));
    }
    let half_norm = 0.5 * dot(xi, xi).sqrt();
    if !(s > 0.0) || s < half_norm {
        return Err(Error::FrameInfeasible { s, half_norm });
    }
    let mut basis: Vec<Vec<f64>> = Vec::new();
    if half_norm > 0.0 {
        basis.push(xi.iter().map(|v| v / (2.0 * half_norm)).collect());
    }
    let mut etas = Vec::new();
    for k in 0..n {
        if etas.len() == 2 {
            break;
        }
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(a, bb)| *a -= c * bb);
            }
        }
        let len = dot(&v, &v).sqrt();
        if len > 1e-6 {
            v.iter_mut().for_each(|a| *a /= len);
            basis.push(v.clone());
            etas.push(v);
        }
    }
    let (eta1, eta2) = (etas[0].clone(), etas[1].clone());
    let r = (s * s - half_norm * half_norm).max(0.0).sqrt();
    let z1: Vec<C64> = (0..n)
        .map(|a| C64::new(s * eta1[a], 0.5 * xi[a] + r * eta2[a]))
        .collect();
    let z2: Vec<C64> = (0..n)
        .map(|a| C64::new(-s * eta1[a], r * eta2[a] - 0.5 * xi[a]))
        .collect();
    let zeta1 = canonicalize_with_tol(&z1, 1e-12)?;
    let zeta2 = canonicalize_with_tol(&z2, 1e-12)?;
    Ok(ZetaFrame {
        xi: xi.to_vec(),
        s,
        eta1,
        eta2,
        r,
        zeta1,
        zeta2,
    })
}

impl ZetaFrame {
    /// Largest violation among the frame identities.
    pub fn invariant_residual(&self) -> f64 {
        let dd = |z: &[C64]| z.iter().map(|v| v * v).sum::<C64>().norm();
        let sum: f64 = self
            .zeta1
            .raw
            .iter()
            .zip(&self.zeta2.raw)
            .zip(&self.xi)
            .map(|((a, b), x)| (a + b.conj() - C64::new(0.0, *x)).norm())
            .fold(0.0, f64::max);
        let mag = |z: &[C64]| {
            (z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() - 2f64.sqrt() * self.s).abs()
        };
        let orth = dot(&self.xi, &self.eta1).abs()
            + dot(&self.xi, &self.eta2).abs()
            + dot(&self.eta1, &self.eta2).abs();
        let scale = 1.0 + self.s;
        [
            dd(&self.zeta1.raw) / (scale * scale),
            dd(&self.zeta2.raw) / (scale * scale),
            sum / scale,
            mag(&self.zeta1.raw) / scale,
            mag(&self.zeta2.raw) / scale,
            orth / scale,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// CGO remainders for the two frame vectors; `r_2` belongs to `conj(q_0)`.
#[derive(Debug, Clone)]
pub struct CgoPair {
    pub zeta1: ZetaVector,
    pub zeta2: ZetaVector,
    pub r1: ComplexField,
    pub r2: ComplexField,
    pub diag1: Option<CgoDiagnostics>,
    pub diag2: Option<CgoDiagnostics>,
}

fn conj_potential(p: &Potential) -> Result<Potential> {
    let mut q = p.q.clone();
    q.data.iter_mut().for_each(|v| *v = v.conj());
    Potential::new(q)
}

fn remainder(
    q: Option<&Potential>,
    zeta: &ZetaVector,
    grid: &GridSpec,
    m: usize,
    green: &GreenConfig,
    cgo: &CgoConfig,
) -> Result<(ComplexField, Option<CgoDiagnostics>)> {
    match q {
        Some(p) if !p.is_zero() => {
            let g = assemble(zeta, m, grid, green)?;
            let sol = build_cgo(p, &g, cgo)?;
            let d = sol.diagnostics();
            Ok((sol.r, Some(d)))
        }
        _ => Ok((ComplexField::zeros(grid), None)),
    }
}

/// Builds `u_1` for `q` at `zeta_1` and `u_2` for `conj(q_0)` at `zeta_2`; `None` means the plane wave.
pub fn build_pair(
    frame: &ZetaFrame,
    q: Option<&Potential>,
    q0: Option<&Potential>,
    grid: &GridSpec,
    m: usize,
    green: &GreenConfig,
    cgo: &CgoConfig,
) -> Result<CgoPair> {
    let (r1, diag1) = remainder(q, &frame.zeta1, grid, m, green, cgo)?;
    let q0c = q0.map(conj_potential).transpose()?;
    let (r2, diag2) = remainder(q0c.as_ref(), &frame.zeta2, grid, m, green, cgo)?;
    Ok(CgoPair {
        zeta1: frame.zeta1.clone(),
        zeta2: frame.zeta2.clone(),
        r1,
        r2,
        diag1,
        diag2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Boundary,
}

/// Inputs of the pairing.
pub enum PairingData<'a> {
    /// Volume integral with the known potentials.
    Oracle {
        q: &'a Potential,
        q0: Option<&'a Potential>,
    },
    /// DN maps `Lambda_q`, `Lambda_0` on the Galerkin box.
    Boundary {
        basis: &'a GalerkinBasis,
        dn: &'a DnMap,
        dn0: &'a DnMap,
    },
}

impl PairingData<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            PairingData::Oracle { .. } => Mode::Oracle,
            PairingData::Boundary { .. } => Mode::Boundary,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Extraction {
    pub xi: Vec<f64>,
    pub s: f64,
    pub mode: Mode,
    /// Raw pairing, the Born approximation of `q^(xi)`.
    pub born: C64,
    /// `int (q - q_0) e^{i x.xi} (r_1 + conj r_2 + r_1 conj r_2)`, oracle mode only.
    pub correction: Option<C64>,
    /// `int (q - q_0) e^{i x.xi}`, oracle mode only.
    pub exact: Option<C64>,
    pub cgo1: Option<CgoDiagnostics>,
    pub cgo2: Option<CgoDiagnostics>,
}

fn same_zeta(a: &ZetaVector, b: &ZetaVector) -> bool {
    a.raw
        .iter()
        .zip(&b.raw)
        .all(|(x, y)| (x - y).norm() <= 1e-12 * (1.0 + x.norm()))
}

/// Approximates `q^(xi)` from the pairing of the frame's CGO solutions.
pub fn extract_fourier_coefficient(
    frame: &ZetaFrame,
    pair: &CgoPair,
    data: &PairingData,
) -> Result<Extraction> {
    if !same_zeta(&frame.zeta1, &pair.zeta1) || !same_zeta(&frame.zeta2, &pair.zeta2) {
        return Err(Error::Dependency(
            "no CGO solutions built at this frame's zeta vectors".into(),
        ));
    }
    let grid = &pair.r1.grid;
    let n = grid.n;
    let one = C64::new(1.0, 0.0);
    let (born, correction, exact) = match data {
        PairingData::Oracle { q, q0 } => {
            if !q.grid().same_geometry(grid) {
                return Err(Error::GridMismatch);
            }
            let mut x = vec![0.0; n];
            let (mut b, mut c, mut e) = (C64::default(), C64::default(), C64::default());
            for i in 0..grid.len() {
                let dq = q.q.data[i] - q0.map(|p| p.q.data[i]).unwrap_or_default();
                if dq == C64::default() {
                    continue;
                }
                grid.point(i, &mut x);
                let w = dq * C64::from_polar(1.0, dot(&x, &frame.xi));
                let (r1, r2c) = (pair.r1.data[i], pair.r2.data[i].conj());
                e += w;
                c += w * (r1 + r2c + r1 * r2c);
                b += w * (one + r1) * (one + r2c);
            }
            let h = grid.cell_volume();
            (b * h, Some(c * h), Some(e * h))
        }
        PairingData::Boundary { basis, dn, dn0 } => {
            if !dn.same_basis(dn0) || dn.size() != basis.n_trace() {
                return Err(Error::Contract(
                    "DN maps must share the Galerkin trace basis".into(),
                ));
            }
            if basis.config.m != 1 {
                return Err(Error::Unsupported(
                    "boundary pairing projects Dirichlet values only (m = 1)".into(),
                ));
            }
            let trace = |z: &ZetaVector, r: &ComplexField| {
                project_trace(basis, |x, _, _, _| {
                    let ph: C64 = x.iter().zip(&z.raw).map(|(a, zz)| zz * a).sum();
                    ph.exp() * (one + sample_field(r, x, 5))
                })
            };
            let f1 = trace(&pair.zeta1, &pair.r1)?;
            let f2 = trace(&pair.zeta2, &pair.r2)?;
            (dn.pair(&f1, &f2) - dn0.pair(&f1, &f2), None, None)
        }
    };
    Ok(Extraction {
        xi: frame.xi.clone(),
        s: frame.s,
        mode: data.mode(),
        born,
        correction,
        exact,
        cgo1: pair.diag1.clone(),
        cgo2: pair.diag2.clone(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructConfig {
    /// Frequencies of the lattice with `|xi| <= xi_radius` are sampled.
    pub xi_radius: f64,
    /// Magnitudes `s`, multiplied by `max(1, |xi|/2)` when `scale_with_xi`.
    pub s_schedule: Vec<f64>,
    pub scale_with_xi: bool,
    /// Enforce `q^(-xi) = conj q^(xi)` and return a real field.
    pub conjugate_symmetric: bool,
    pub m: usize,
    pub green: GreenConfig,
    pub cgo: CgoConfig,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            xi_radius: 4.0,
            s_schedule: vec![8.0, 16.0, 32.0],
            scale_with_xi: true,
            conjugate_symmetric: true,
            m: 1,
            green: GreenConfig::naive(),
            cgo: CgoConfig::default(),
        }
    }
}

/// Where the pairing comes from; `cgo_potential` builds `u_1` in boundary mode (plane wave if `None`).
pub enum Source<'a> {
    Oracle {
        q: &'a Potential,
        q0: Option<&'a Potential>,
    },
    Boundary {
        basis: &'a GalerkinBasis,
        dn: &'a DnMap,
        dn0: &'a DnMap,
        cgo_potential: Option<&'a Potential>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XiSample {
    pub k: Vec<i64>,
    pub extraction: Extraction,
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub s_base: f64,
    pub samples: Vec<XiSample>,
    pub missing: Vec<Vec<i64>>,
    /// Inverse transform of the low-passed `q^`.
    pub field: ComplexField,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub stages: Vec<Stage>,
}

impl ReconstructionResult {
    /// Stage at the largest `s`.
    pub fn last(&self) -> &Stage {
        self.stages.last().expect("at least one stage")
    }
}

/// Lattice indices `k` with `|(pi/L) k| <= radius`; with `half`, one of each `+-k` pair.
pub fn xi_lattice(grid: &GridSpec, radius: f64, half: bool) -> Vec<Vec<i64>> {
    let n = grid.n;
    let kmax = (radius / grid.freq_step()).floor() as i64;
    let kmax = kmax.min(grid.points_per_axis as i64 / 2 - 1);
    let side = (2 * kmax + 1) as usize;
    let mut out = Vec::new();
    for c in 0..side.pow(n as u32) {
        let mut rest = c;
        let mut k = vec![0i64; n];
        for a in (0..n).rev() {
            k[a] = (rest % side) as i64 - kmax;
            rest /= side;
        }
        let r2: f64 = k
            .iter()
            .map(|&v| (v as f64 * grid.freq_step()).powi(2))
            .sum();
        if r2.sqrt() > radius + 1e-12 {
            continue;
        }
        if half {
            // keep k >= 0 lexicographically
            if let Some(first) = k.iter().find(|&&v| v != 0) {
                if *first < 0 {
                    continue;
                }
            }
        }
        out.push(k);
    }
    out
}

/// Field `f` with `int f e^{i x.xi} = values` on the listed lattice points and 0 elsewhere.
pub fn field_from_coefficients(
    grid: &GridSpec,
    values: &[(Vec<i64>, C64)],
) -> Result<ComplexField> {
    let mut spec = ComplexField::zeros(grid);
    spec.representation = Representation::Fourier;
    for (k, v) in values {
        // int q e^{i x.xi} is the e^{-i x.xi} transform at -xi
        let neg: Vec<i64> = k.iter().map(|a| -a).collect();
        let flat = grid
            .flat_of_folded(&neg)
            .ok_or_else(|| Error::Contract(format!("frequency {k:?} outside the grid")))?;
        spec.data[flat] = *v;
    }
    fft_inverse(&spec)
}

/// Low-pass of `q` to `|xi| <= radius` on the same lattice.
pub fn low_pass(q: &ComplexField, radius: f64) -> Result<ComplexField> {
    let grid = &q.grid;
    let fq = fft_forward(q)?;
    let vals: Vec<(Vec<i64>, C64)> = xi_lattice(grid, radius, false)
        .into_iter()
        .map(|k| {
            let neg: Vec<i64> = k.iter().map(|a| -a).collect();
            let v = fq.data[grid.flat_of_folded(&neg).unwrap()];
            (k, v)
        })
        .collect();
    field_from_coefficients(grid, &vals)
}

pub fn relative_l2_error(a: &ComplexField, truth: &ComplexField) -> Result<f64> {
    let t = truth.l2();
    let d = a.sub(truth)?.l2();
    Ok(if t > 0.0 { d / t } else { d })
}

/// Finite-`s` Born inversion over the lattice frequencies, one stage per schedule entry.
pub fn reconstruct(
    source: &Source,
    grid: &GridSpec,
    config: &ReconstructConfig,
) -> Result<ReconstructionResult> {
    if grid.n < 3 {
        return Err(Error::Contract("reconstruction needs n >= 3".into()));
    }
    if config.s_schedule.is_empty() {
        return Err(Error::Contract("empty s-schedule".into()));
    }
    if let Source::Boundary { dn, dn0, .. } = source {
        if !dn.same_basis(dn0) {
            return Err(Error::Contract(
                "DN maps do not share the trace basis and geometry".into(),
            ));
        }
    }
    let ks = xi_lattice(grid, config.xi_radius, config.conjugate_symmetric);
    let mut stages = Vec::new();
    for &s_base in &config.s_schedule {
        let results: Vec<(Vec<i64>, Result<Extraction>)> = ks
            .par_iter()
            .map(|k| {
                let xi: Vec<f64> = k.iter().map(|&v| v as f64 * grid.freq_step()).collect();
                let norm = dot(&xi, &xi).sqrt();
                let s = if config.scale_with_xi {
                    s_base * (norm / 2.0).max(1.0)
                } else {
                    s_base
                };
                let run = || -> Result<Extraction> {
                    let frame = build_frame(&xi, s)?;
                    match source {
                        Source::Oracle { q, q0 } => {
                            let pair = build_pair(
                                &frame,
                                Some(q),
                                *q0,
                                grid,
                                config.m,
                                &config.green,
                                &config.cgo,
                            )?;
                            extract_fourier_coefficient(
                                &frame,
                                &pair,
                                &PairingData::Oracle { q, q0: *q0 },
                            )
                        }
                        Source::Boundary {
                            basis,
                            dn,
                            dn0,
                            cgo_potential,
                        } => {
                            let pair = build_pair(
                                &frame,
                                *cgo_potential,
                                None,
                                grid,
                                config.m,
                                &config.green,
                                &config.cgo,
                            )?;
                            extract_fourier_coefficient(
                                &frame,
                                &pair,
                                &PairingData::Boundary { basis, dn, dn0 },
                            )
                        }
                    }
                };
                (k.clone(), run())
            })
            .collect();
        let mut samples = Vec::new();
        let mut missing = Vec::new();
        for (k, r) in results {
            match r {
                Ok(e) => samples.push(XiSample { k, extraction: e }),
                Err(Error::FrameInfeasible { .. }) => missing.push(k),
                Err(e) => return Err(e),
            }
        }
        let mut values: Vec<(Vec<i64>, C64)> = Vec::new();
        for smp in &samples {
            let k = &smp.k;
            let v = smp.extraction.born;
            if config.conjugate_symmetric {
                if k.iter().all(|&a| a == 0) {
                    values.push((k.clone(), C64::new(v.re, 0.0)));
                } else {
                    values.push((k.clone(), v));
                    values.push((k.iter().map(|a| -a).collect(), v.conj()));
                }
            } else {
                values.push((k.clone(), v));
            }
        }
        let field = field_from_coefficients(grid, &values)?;
        stages.push(Stage {
            s_base,
            samples,
            missing,
            field,
        });
    }
    Ok(ReconstructionResult { stages })
}
