//! The complex frequency `zeta`, the symbol `p_zeta(xi) = |xi|^2 - 2i zeta.xi`, its
//! characteristic set, the open cover / partition of unity near it and the
//! straightening diffeomorphisms.
//!
//! Unless stated otherwise, functions take `xi` in canonical coordinates, where
//! `zeta = s e_1 - i s e_2` and the characteristic set is
//! `{xi_1 = 0, |xi - s e_2| = s}`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isotropic complex vector together with the rotation to canonical form.
#[derive(Debug, Clone, PartialEq)]
pub struct ZetaVector {
    pub raw: Vec<C64>,
    pub s: f64,
    /// Row-major `n x n` orthogonal matrix `R` with `R raw = s e_1 - i s e_2`.
    pub rotation: Vec<f64>,
}

pub const ISOTROPY_TOL: f64 = 1e-12;

/// Builds the canonical frame of an isotropic `zeta`.
pub fn canonicalize(raw: &[C64]) -> Result<ZetaVector> {
    canonicalize_with_tol(raw, ISOTROPY_TOL)
}

pub fn canonicalize_with_tol(raw: &[C64], tol: f64) -> Result<ZetaVector> {
    let n = raw.len();
    if n < 2 {
        return Err(Error::Contract(
            "zeta must have at least two components".into(),
        ));
    }
    let norm2: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
    if norm2 == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: C64 = raw.iter().map(|z| z * z).sum();
    if dot.norm() > tol * norm2 {
        return Err(Error::NotIsotropic {
            residual: dot.norm() / norm2,
        });
    }
    let s = (norm2 / 2.0).sqrt();
    let re: Vec<f64> = raw.iter().map(|z| z.re).collect();
    let im: Vec<f64> = raw.iter().map(|z| -z.im).collect();

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for cand in std::iter::once(re)
        .chain(std::iter::once(im))
        .chain((0..n).map(|k| {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            e
        }))
    {
        if rows.len() == n {
            break;
        }
        let mut v = cand;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for r in &rows {
                let c: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(a, b)| *a -= c * b);
            }
        }
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len > 1e-8 {
            v.iter_mut().for_each(|a| *a /= len);
            rows.push(v);
        } else if rows.len() < 2 {
            return Err(Error::NotIsotropic {
                residual: dot.norm() / norm2,
            });
        }
    }
    let rotation = rows.into_iter().flatten().collect();
    Ok(ZetaVector {
        raw: raw.to_vec(),
        s,
        rotation,
    })
}

impl ZetaVector {
    pub fn n(&self) -> usize {
        self.raw.len()
    }

    /// Canonical `zeta = s e_1 - i s e_2` in dimension `n`.
    pub fn canonical(n: usize, s: f64) -> Self {
        let mut raw = vec![C64::new(0.0, 0.0); n];
        raw[0] = C64::new(s, 0.0);
        raw[1] = C64::new(0.0, -s);
        canonicalize(&raw).expect("canonical zeta is isotropic")
    }

    pub fn rot(&self, i: usize, j: usize) -> f64 {
        self.rotation[i * self.n() + j]
    }

    /// `R xi`.
    pub fn to_canonical(&self, xi: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.rot(i, j) * xi[j]).sum())
            .collect()
    }

    /// `R^T eta`.
    pub fn from_canonical(&self, eta: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|j| (0..n).map(|i| self.rot(i, j) * eta[i]).sum())
            .collect()
    }

    /// `R raw`, which should equal `s e_1 - i s e_2`.
    pub fn rotated_raw(&self) -> Vec<C64> {
        let n = self.n();
        (0..n)
            .map(|i| (0..n).map(|j| self.raw[j] * self.rot(i, j)).sum())
            .collect()
    }

    /// If `R` is a signed permutation, returns `(axis, sign)` per canonical row:
    /// canonical coordinate `i` equals `sign * xi[axis]`.
    pub fn signed_permutation(&self) -> Option<Vec<(usize, f64)>> {
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut hit = None;
            for j in 0..n {
                let r = self.rot(i, j);
                if (r.abs() - 1.0).abs() < 1e-12 {
                    hit = Some((j, r.signum()));
                } else if r.abs() > 1e-12 {
                    return None;
                }
            }
            out.push(hit?);
        }
        Some(out)
    }
}

/// `|xi|^2 - 2i zeta.xi` for an arbitrary (raw) `zeta`.
pub fn symbol_raw(zeta: &[C64], xi: &[f64]) -> C64 {
    let k2: f64 = xi.iter().map(|a| a * a).sum();
    let dot: C64 = zeta.iter().zip(xi).map(|(z, x)| z * x).sum();
    C64::new(k2, 0.0) - C64::new(0.0, 2.0) * dot
}

/// `|xi - s e_2|^2 - s^2 - 2 i s xi_1` in canonical coordinates.
pub fn eval_symbol(zeta: &ZetaVector, xi: &[f64]) -> C64 {
    eval_symbol_s(zeta.s, xi)
}

pub fn eval_symbol_s(s: f64, xi: &[f64]) -> C64 {
    // |xi|^2 - 2 s xi_2 avoids cancellation of s^2 for large s
    let k2: f64 = xi.iter().map(|a| a * a).sum();
    C64::new(k2 - 2.0 * s * xi[1], -2.0 * s * xi[0])
}

/// Exact Euclidean distance from canonical `xi` to the characteristic set.
pub fn dist_to_char_set(zeta: &ZetaVector, xi: &[f64]) -> f64 {
    dist_to_char_set_s(zeta.s, xi)
}

pub fn dist_to_char_set_s(s: f64, xi: &[f64]) -> f64 {
    let rho = ((xi[1] - s).powi(2) + xi[2..].iter().map(|a| a * a).sum::<f64>()).sqrt();
    (xi[0] * xi[0] + (rho - s).powi(2)).sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolBoundsReport {
    pub s: f64,
    pub m_factor: f64,
    pub far_checked: usize,
    pub near_checked: usize,
    pub skipped_on_sigma: usize,
    pub near_ratio_min: f64,
    pub near_ratio_max: f64,
    /// Bracket `[c(M), C(M)]` that every near ratio must fall in.
    pub bracket: (f64, f64),
}

/// Bracket for `|p| / (s d)` on `|xi| <= M |zeta|`.
///
/// Upper: `|p|^2 = (rho^2 - s^2)^2 + 4 s^2 xi_1^2` with `rho + s <= (sqrt2 M + 2) s`,
/// so `|p| <= (sqrt2 M + 2) s d`. Lower: `rho + s >= s` gives `|p| >= s d`.
pub fn symbol_bracket(m_factor: f64) -> (f64, f64) {
    (1.0, 2f64.sqrt() * m_factor + 2.0)
}

/// Checks the two-regime symbol estimates on canonical samples.
pub fn check_symbol_bounds(
    zeta: &ZetaVector,
    samples: &[Vec<f64>],
    m_factor: f64,
) -> Result<SymbolBoundsReport> {
    let s = zeta.s;
    let zn = s * 2f64.sqrt();
    let bracket = symbol_bracket(m_factor);
    let mut rep = SymbolBoundsReport {
        s,
        m_factor,
        far_checked: 0,
        near_checked: 0,
        skipped_on_sigma: 0,
        near_ratio_min: f64::INFINITY,
        near_ratio_max: 0.0,
        bracket,
    };
    for xi in samples {
        let k2: f64 = xi.iter().map(|a| a * a).sum();
        let k = k2.sqrt();
        let p = eval_symbol(zeta, xi).norm();
        if k >= 4.0 * zn {
            if p < 0.5 * k2 * (1.0 - 1e-12) || p > 1.5 * k2 * (1.0 + 1e-12) {
                return Err(Error::Invariant(format!(
                    "|p_zeta| = {p} outside [|xi|^2/2, 3|xi|^2/2] at xi = {xi:?}"
                )));
            }
            rep.far_checked += 1;
        }
        if k <= m_factor * zn {
            let d = dist_to_char_set(zeta, xi);
            if s * d <= 1e-12 * s * s {
                rep.skipped_on_sigma += 1;
                continue;
            }
            let r = p / (s * d);
            if !r.is_finite() || r < bracket.0 * (1.0 - 1e-9) || r > bracket.1 * (1.0 + 1e-9) {
                return Err(Error::Invariant(format!(
                    "|p_zeta|/(s d) = {r} outside [{}, {}] at xi = {xi:?}",
                    bracket.0, bracket.1
                )));
            }
            rep.near_ratio_min = rep.near_ratio_min.min(r);
            rep.near_ratio_max = rep.near_ratio_max.max(r);
            rep.near_checked += 1;
        }
    }
    Ok(rep)
}

/// `t^3 (10 - 15 t + 6 t^2)` clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Chart label `(j, sign)` with `j` a 1-based axis in `2..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChartId {
    pub j: usize,
    pub sign: Sign,
}

impl ChartId {
    pub fn all(n: usize) -> Vec<ChartId> {
        (2..=n)
            .flat_map(|j| {
                [
                    ChartId {
                        j,
                        sign: Sign::Plus,
                    },
                    ChartId {
                        j,
                        sign: Sign::Minus,
                    },
                ]
            })
            .collect()
    }

    /// Center of the `xi_j` coordinate at scale `s` (`s` for `j = 2`, else 0).
    pub fn center(&self, s: f64) -> f64 {
        if self.j == 2 {
            s
        } else {
            0.0
        }
    }
}

/// Values of every piece of the partition at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionValues {
    pub chi1: f64,
    /// Ordered as [`ChartId::all`].
    pub charts: Vec<f64>,
}

impl PartitionValues {
    pub fn total(&self) -> f64 {
        self.chi1 + self.charts.iter().sum::<f64>()
    }
}

/// Partition of unity `chi_1(s) + sum_j (chi_{j,+}(s) + chi_{j,-}(s)) = 1`
/// subordinate to the cover of a neighbourhood of the characteristic set.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    pub s: f64,
    pub n: usize,
    pub charts: Vec<ChartId>,
}

pub fn build_partition(zeta: &ZetaVector, n: usize) -> Result<PartitionOfUnity> {
    if n < 2 || n != zeta.n() {
        return Err(Error::Contract(format!(
            "partition dimension {n} does not match zeta"
        )));
    }
    Ok(PartitionOfUnity {
        s: zeta.s,
        n,
        charts: ChartId::all(n),
    })
}

impl PartitionOfUnity {
    /// Transition width of the mollified indicators at scale 1.
    pub fn width(&self) -> f64 {
        1.0 / (8.0 * self.n as f64)
    }

    /// Outer radius of the region where the chart pieces sum to one, at scale 1.
    pub fn plateau_radius(&self) -> f64 {
        1.0 / (2.0 * self.n as f64) + self.width()
    }

    /// Radius beyond which every chart piece vanishes, at scale 1.
    pub fn support_radius(&self) -> f64 {
        self.plateau_radius() + self.width()
    }

    /// Evaluates every piece at canonical `xi` via `chi(s)(xi) = chi(1)(xi / s)`.
    pub fn eval(&self, xi: &[f64]) -> PartitionValues {
        let y: Vec<f64> = xi.iter().map(|a| a / self.s).collect();
        self.eval_at_scale(1.0, &y)
    }

    /// Same pieces built directly at scale `s`, without rescaling `xi`.
    pub fn eval_direct(&self, xi: &[f64]) -> PartitionValues {
        self.eval_at_scale(self.s, xi)
    }

    fn eval_at_scale(&self, s: f64, xi: &[f64]) -> PartitionValues {
        let n = self.n as f64;
        let w = s * self.width();
        let half = s / (2.0 * n);
        let d = dist_to_char_set_s(s, xi);
        let psi = 1.0 - smoothstep((d - (half + w)) / w);
        let mut charts = vec![0.0; self.charts.len()];
        if psi > 0.0 {
            let mut total = 0.0;
            for (k, c) in self.charts.iter().enumerate() {
                let off = c.sign.value() * (xi[c.j - 1] - c.center(s));
                charts[k] = smoothstep((off - half) / w);
                total += charts[k];
            }
            // total > 0 on supp psi: some |xi_j - c_j| >= 1/sqrt(n-1) - 3/(4n) > 5/(8n)
            for v in charts.iter_mut() {
                *v *= psi / total;
            }
        }
        PartitionValues {
            chi1: 1.0 - psi,
            charts,
        }
    }

    pub fn chart_index(&self, id: ChartId) -> usize {
        self.charts
            .iter()
            .position(|c| *c == id)
            .expect("chart of this partition")
    }
}

/// Straightening map of `V_{j,+-}(s)` sending the characteristic set to
/// `{eta_1 = eta_j = 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffeo {
    pub id: ChartId,
    pub s: f64,
    pub n: usize,
}

impl Diffeo {
    pub fn new(id: ChartId, s: f64, n: usize) -> Result<Self> {
        if id.j < 2 || id.j > n {
            return Err(Error::Contract(format!(
                "chart axis j = {} outside 2..={n}",
                id.j
            )));
        }
        Ok(Self { id, s, n })
    }

    fn out(&self, reason: String) -> Error {
        Error::OutOfChart {
            j: self.id.j,
            sign: self.id.sign.as_char(),
            reason,
        }
    }

    /// Membership in `V_{j,+-}(s)`.
    pub fn contains(&self, xi: &[f64]) -> bool {
        let off = self.id.sign.value() * (xi[self.id.j - 1] - self.id.center(self.s));
        off > self.s / (2.0 * self.n as f64) && dist_to_char_set_s(self.s, xi) < self.s
    }

    pub fn forward(&self, xi: &[f64]) -> Result<Vec<f64>> {
        if !self.contains(xi) {
            return Err(self.out(format!("xi = {xi:?} not in V_(j,sign)(s)")));
        }
        Ok(self.forward_unchecked(xi))
    }

    /// Formula of the forward map without the domain check.
    pub fn forward_unchecked(&self, xi: &[f64]) -> Vec<f64> {
        let s = self.s;
        let mut eta = xi.to_vec();
        eta[0] = -2.0 * xi[0];
        let q = xi[0] * xi[0] + (xi[1] - s).powi(2) + xi[2..].iter().map(|a| a * a).sum::<f64>();
        eta[self.id.j - 1] = (q - s * s) / s;
        eta
    }

    pub fn inverse(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let s = self.s;
        let j = self.id.j - 1;
        let mut xi = eta.to_vec();
        xi[0] = -0.5 * eta[0];
        let mut rest = xi[0] * xi[0];
        for (l, v) in xi.iter().enumerate().skip(1) {
            if l == j {
                continue;
            }
            rest += if l == 1 { (v - s).powi(2) } else { v * v };
        }
        let rad = s * eta[j] + s * s - rest;
        let lim = s / (2.0 * self.n as f64);
        if !(rad > lim * lim) {
            return Err(self.out(format!("eta = {eta:?} has |xi_j - c| <= s/(2n)")));
        }
        xi[j] = self.id.center(s) + self.id.sign.value() * rad.sqrt();
        Ok(xi)
    }

    /// `|det d eta / d xi|`.
    pub fn jacobian(&self, xi: &[f64]) -> f64 {
        4.0 * (xi[self.id.j - 1] - self.id.center(self.s)).abs() / self.s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn canonical_zeta_has_identity_frame() {
        let z = canonicalize(&[c(1.0, 0.0), c(0.0, -1.0), c(0.0, 0.0)]).unwrap();
        assert!((z.s - 1.0).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(z.rot(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cyclic_frame() {
        let z = canonicalize(&[c(0.0, 0.0), c(1.0, 0.0), c(0.0, -1.0)]).unwrap();
        let expect = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((z.rot(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(
            z.signed_permutation(),
            Some(vec![(1, 1.0), (2, 1.0), (0, 1.0)])
        );
    }

    #[test]
    fn non_isotropic_and_zero_rejected() {
        assert!(matches!(
            canonicalize(&[c(1.0, 0.0), c(0.0, -2.0), c(0.0, 0.0)]),
            Err(Error::NotIsotropic { .. })
        ));
        assert!(matches!(
            canonicalize(&[c(0.0, 0.0); 3]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn symbol_examples() {
        let z = ZetaVector::canonical(3, 1.0);
        assert!(eval_symbol(&z, &[0.0, 2.0, 0.0]).norm() < 1e-15);
        assert!(eval_symbol(&z, &[0.0, 0.0, 0.0]).norm() < 1e-15);
        let p = eval_symbol(&z, &[1.0, 0.0, 0.0]);
        assert!((p - c(1.0, -2.0)).norm() < 1e-15);
        assert!((symbol_raw(&z.raw, &[1.0, 0.0, 0.0]) - p).norm() < 1e-15);
        let far = eval_symbol(&z, &[8.0, 0.0, 0.0]).norm();
        assert!((far - 4352f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        let z = ZetaVector::canonical(3, 1.5);
        assert!(dist_to_char_set(&z, &[0.0, 3.0, 0.0]) < 1e-15);
        let z = ZetaVector::canonical(3, 1.0);
        assert!((dist_to_char_set(&z, &[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-15);
        // brute force over the characteristic circle
        let xi = [0.3, -0.7, 1.9];
        let mut best = f64::INFINITY;
        for k in 0..200_000 {
            let th = k as f64 * std::f64::consts::TAU / 200_000.0;
            let p = [0.0, 1.0 + th.cos(), th.sin()];
            let d: f64 = xi
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
        assert!((dist_to_char_set(&z, &xi) - best).abs() < 1e-9);
    }

    #[test]
    fn symbol_bound_sweep() {
        let z = ZetaVector::canonical(3, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect())
            .filter(|x: &Vec<f64>| x.iter().map(|a| a * a).sum::<f64>().sqrt() <= 4.0)
            .chain([
                vec![8.0, 0.0, 0.0],
                vec![0.0, 2.0, 0.0],
                vec![20.0, -3.0, 9.0],
            ])
            .collect();
        let rep = check_symbol_bounds(&z, &samples, 4.0).unwrap();
        assert!(rep.far_checked >= 2);
        assert_eq!(rep.skipped_on_sigma, 1);
        assert!(rep.near_ratio_min >= rep.bracket.0 && rep.near_ratio_max <= rep.bracket.1);
        assert!(rep.near_ratio_min.is_finite());
    }

    #[test]
    fn partition_on_sigma_and_scaling() {
        for n in [2usize, 3, 5] {
            let s = 2.7;
            let z = ZetaVector::canonical(n, s);
            let pu = build_partition(&z, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            for _ in 0..2000 {
                let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let mut dir: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let len = dir.iter().map(|a| a * a).sum::<f64>().sqrt();
                dir.iter_mut().for_each(|a| *a /= len);
                let mut xi = vec![0.0; n];
                for l in 1..n {
                    xi[l] = s * dir[l - 1];
                }
                xi[1] += s;
                let v = pu.eval(&xi);
                assert!(v.chi1.abs() < 1e-15);
                assert!((v.total() - 1.0).abs() < 1e-12);
                // generic points
                let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0 * s..3.0 * s)).collect();
                let a = pu.eval(&y);
                let b = pu.eval_direct(&y);
                assert!((a.chi1 - b.chi1).abs() < 1e-14);
                for (p, q) in a.charts.iter().zip(&b.charts) {
                    assert!((p - q).abs() < 1e-14);
                    assert!((0.0..=1.0).contains(p));
                }
                assert!((a.total() - 1.0).abs() < 1e-12);
                let _ = th;
            }
        }
    }

    #[test]
    fn chart_supports_inside_cover() {
        let n = 3;
        let z = ZetaVector::canonical(n, 1.0);
        let pu = build_partition(&z, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..2.5)).collect();
            let v = pu.eval(&xi);
            for (k, id) in pu.charts.iter().enumerate() {
                if v.charts[k] > 0.0 {
                    assert!(Diffeo::new(*id, 1.0, n).unwrap().contains(&xi));
                }
            }
        }
    }

    #[test]
    fn diffeo_examples() {
        let d = Diffeo::new(
            ChartId {
                j: 2,
                sign: Sign::Plus,
            },
            1.0,
            3,
        )
        .unwrap();
        let eta = d.forward(&[0.0, 2.0, 0.0]).unwrap();
        assert!(eta[0].abs() < 1e-15 && eta[1].abs() < 1e-15);
        assert!((d.jacobian(&[0.0, 1.25, 0.0]) - 1.0).abs() < 1e-15);
        assert!(matches!(
            d.forward(&[0.0, 1.0, 0.0]),
            Err(Error::OutOfChart { .. })
        ));
        assert!(d.inverse(&[0.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn diffeo_round_trip_symbol_and_jacobian() {
        let n = 4;
        let s = 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for id in ChartId::all(n) {
            let d = Diffeo::new(id, s, n).unwrap();
            let d1 = Diffeo::new(id, 1.0, n).unwrap();
            let mut hits = 0;
            while hits < 1000 {
                let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0 * s..3.0 * s)).collect();
                if !d.contains(&xi) {
                    continue;
                }
                hits += 1;
                let eta = d.forward(&xi).unwrap();
                let back = d.inverse(&eta).unwrap();
                for (a, b) in xi.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-10 * s);
                }
                let p = eval_symbol_s(s, &xi);
                let flat = C64::new(s * eta[id.j - 1], s * eta[0]);
                let norm_eta = eta.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!((p - flat).norm() <= 1e-10 * s * (1.0 + norm_eta));
                let jac = d.jacobian(&xi);
                assert!(jac > 2.0 / n as f64 && jac < 8.0);
                let scaled: Vec<f64> = xi.iter().map(|a| a / s).collect();
                let e1 = d1.forward(&scaled).unwrap();
                for (a, b) in eta.iter().zip(&e1) {
                    assert!((a - s * b).abs() < 1e-12 * s * (1.0 + b.abs()));
                }
            }
        }
    }
}
