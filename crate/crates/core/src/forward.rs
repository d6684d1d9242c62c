//! Galerkin solver for `((-Delta)^m + q) u = 0` on the box `[-a, a]^n` with
//! Dirichlet data `(u, d_nu u, ..., d_nu^{m-1} u)`, and the Dirichlet-to-Neumann
//! map in its weak form `<Lambda f, conj h> = a(u_f, w_h)`.
//!
//! The 1-D factors are `2m` Hermite endpoint polynomials of degree `2m - 1` and
//! bubbles `(1 - t^2)^m P_k(t)`. A tensor function is interior when every factor
//! is a bubble; the trace basis is the tensor functions with at least one Hermite
//! factor and bubble degrees below `trace_degree`.
//!
//! Matrices are stored as `G[i][j] = a(phi_j, phi_i)`; the basis is real, so
//! `a(u, v) = conj(v)^T G u` and `G` is complex symmetric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, C64};
use crate::interp::sample_field;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForwardConfig {
    pub n: usize,
    pub m: usize,
    /// Half-width `a` of the box domain.
    pub half_width: f64,
    /// Bubbles per axis in the interior basis.
    pub interior_degree: usize,
    /// Bubbles per tangential axis in the trace basis.
    pub trace_degree: usize,
    /// Gauss-Legendre points per axis; `None` picks `max(2m + K + 8, 24)`.
    pub quad_points: Option<usize>,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            n: 3,
            m: 1,
            half_width: 2.0,
            interior_degree: 8,
            trace_degree: 4,
            quad_points: None,
        }
    }
}

/// Largest DN matrix the trace basis may produce.
pub const MAX_TRACE_SIZE: usize = 512;

/// Dense solves switch to an iterative method above this many interior unknowns.
pub const DIRECT_SOLVE_LIMIT: usize = 4000;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn poly_deriv_eval(coef: &[f64], d: usize, t: f64) -> f64 {
    let mut acc = 0.0;
    for p in (d..coef.len()).rev() {
        let mut fall = 1.0;
        for r in 0..d {
            fall *= (p - r) as f64;
        }
        acc = acc * t + coef[p] * fall;
    }
    // Horner over powers p - d
    acc
}

/// `d^l/dt^l P_k(t) = (2l - 1)!! C^{(l + 1/2)}_{k - l}(t)`.
fn legendre_deriv(k: usize, l: usize, t: f64) -> f64 {
    if l > k {
        return 0.0;
    }
    let lam = l as f64 + 0.5;
    let deg = k - l;
    let mut c0 = 1.0;
    let mut c1 = 2.0 * lam * t;
    let c = if deg == 0 {
        c0
    } else {
        for j in 2..=deg {
            let jf = j as f64;
            let c2 = (2.0 * t * (jf + lam - 1.0) * c1 - (jf + 2.0 * lam - 2.0) * c0) / jf;
            c0 = c1;
            c1 = c2;
        }
        c1
    };
    let dfact: f64 = (1..=l).map(|i| (2 * i - 1) as f64).product();
    dfact * c
}

/// One-dimensional factor on `[-1, 1]`.
#[derive(Debug, Clone)]
enum Factor {
    /// Monomial coefficients.
    Hermite(Vec<f64>),
    /// `(1 - t^2)^m P_k(t)`.
    Bubble { k: usize, weight: Vec<f64> },
}

impl Factor {
    fn deriv(&self, d: usize, t: f64) -> f64 {
        match self {
            Factor::Hermite(c) => poly_deriv_eval(c, d, t),
            Factor::Bubble { k, weight } => (0..=d)
                .map(|l| {
                    binomial(d, l) * poly_deriv_eval(weight, d - l, t) * legendre_deriv(*k, l, t)
                })
                .sum(),
        }
    }
}

fn hermite_family(m: usize) -> Result<Vec<Factor>> {
    let deg = 2 * m;
    // rows: conditions (endpoint e, derivative l); columns: monomials
    let mut a = DMatrix::<f64>::zeros(deg, deg);
    for e in 0..2 {
        let t = if e == 0 { -1.0 } else { 1.0 };
        for l in 0..m {
            for p in 0..deg {
                let mut unit = vec![0.0; deg];
                unit[p] = 1.0;
                a[(e * m + l, p)] = poly_deriv_eval(&unit, l, t);
            }
        }
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Hermite system is singular".into()))?;
    Ok((0..deg)
        .map(|c| Factor::Hermite(inv.column(c).iter().cloned().collect()))
        .collect())
}

/// Tensor Galerkin basis on `[-a, a]^n`.
#[derive(Debug, Clone)]
pub struct GalerkinBasis {
    pub config: ForwardConfig,
    factors: Vec<Factor>,
    /// Reference nodes and weights on `[-1, 1]`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `table[f][d][a]`: `d`-th reference derivative of factor `f` at node `a`.
    table: Vec<Vec<Vec<f64>>>,
    /// Multi-indices into the 1-D factor list; interior functions first.
    pub functions: Vec<Vec<usize>>,
    pub n_interior: usize,
}

impl GalerkinBasis {
    pub fn new(config: &ForwardConfig) -> Result<Self> {
        let ForwardConfig {
            n,
            m,
            half_width,
            interior_degree: k,
            trace_degree: kt,
            ..
        } = *config;
        if n < 2 || m < 1 {
            return Err(Error::Contract(format!(
                "forward solver needs n >= 2, m >= 1 (got n = {n}, m = {m})"
            )));
        }
        if !(half_width > 0.0) {
            return Err(Error::Contract("box half-width must be positive".into()));
        }
        if k == 0 || kt > k {
            return Err(Error::Contract(format!(
                "need 1 <= interior_degree and trace_degree <= interior_degree (got {k}, {kt})"
            )));
        }
        let mut factors = hermite_family(m)?;
        let mut weight = vec![0.0; 2 * m + 1];
        for j in 0..=m {
            weight[2 * j] = binomial(m, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
        }
        for b in 0..k {
            factors.push(Factor::Bubble {
                k: b,
                weight: weight.clone(),
            });
        }
        let p = factors.len();
        let q = config.quad_points.unwrap_or((2 * m + k + 8).max(24));
        let (nodes, weights) = gauss_legendre(q);
        let table: Vec<Vec<Vec<f64>>> = factors
            .iter()
            .map(|f| {
                (0..=m)
                    .map(|d| nodes.iter().map(|&t| f.deriv(d, t)).collect())
                    .collect()
            })
            .collect();

        // quadrature resolution: the 1-D Gram matrix must be numerically nonsingular
        let mut gram = DMatrix::<f64>::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                gram[(i, j)] = (0..q)
                    .map(|a| weights[a] * table[i][0][a] * table[j][0][a])
                    .sum();
            }
        }
        let ev = SymmetricEigen::new(gram).eigenvalues;
        let (lo, hi) = ev
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        if !(lo > 1e-13 * hi) {
            return Err(Error::Numerical(format!(
                "quadrature underresolved: 1-D mass matrix condition {:.1e} with {q} points for {p} functions",
                hi / lo.max(f64::MIN_POSITIVE)
            )));
        }

        let hermite = 2 * m;
        let mut interior = Vec::new();
        let mut trace = Vec::new();
        let total = p.pow(n as u32);
        for c in 0..total {
            let mut idx = vec![0usize; n];
            let mut rest = c;
            for d in (0..n).rev() {
                idx[d] = rest % p;
                rest /= p;
            }
            if idx.iter().all(|&i| i >= hermite) {
                interior.push(idx);
            } else if idx.iter().all(|&i| i < hermite + kt) {
                trace.push(idx);
            }
        }
        if trace.len() > MAX_TRACE_SIZE {
            return Err(Error::Contract(format!(
                "trace basis of size {} exceeds {MAX_TRACE_SIZE}; lower trace_degree",
                trace.len()
            )));
        }
        let n_interior = interior.len();
        let mut functions = interior;
        functions.extend(trace);
        Ok(Self {
            config: config.clone(),
            factors,
            nodes,
            weights,
            table,
            functions,
            n_interior,
        })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn n_trace(&self) -> usize {
        self.functions.len() - self.n_interior
    }

    pub fn factors_per_axis(&self) -> usize {
        self.factors.len()
    }

    /// Scale `1 / a` of one physical derivative.
    fn dscale(&self) -> f64 {
        1.0 / self.config.half_width
    }

    /// `D^alpha phi_i` at the physical point `x`.
    pub fn eval(&self, i: usize, x: &[f64], alpha: &[usize]) -> f64 {
        let a = self.config.half_width;
        self.functions[i]
            .iter()
            .zip(x)
            .zip(alpha)
            .map(|((&f, &xd), &k)| self.factors[f].deriv(k, xd / a) * self.dscale().powi(k as i32))
            .product()
    }

    /// `D^alpha u` for `u = sum_i c_i phi_i`.
    pub fn eval_coeffs(&self, c: &[C64], x: &[f64], alpha: &[usize]) -> C64 {
        c.iter()
            .enumerate()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|(i, v)| v * self.eval(i, x, alpha))
            .sum()
    }

    /// Physical quadrature nodes (row-major over axes) and their weights.
    pub fn quadrature_points(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.config.n;
        let q = self.nodes.len();
        let a = self.config.half_width;
        let mut pts = Vec::with_capacity(q.pow(n as u32));
        let mut wts = Vec::with_capacity(q.pow(n as u32));
        for c in 0..q.pow(n as u32) {
            let mut rest = c;
            let mut x = vec![0.0; n];
            let mut w = 1.0;
            for d in (0..n).rev() {
                let k = rest % q;
                rest /= q;
                x[d] = a * self.nodes[k];
                w *= a * self.weights[k];
            }
            pts.push(x);
            wts.push(w);
        }
        (pts, wts)
    }

    /// 1-D matrix `int f_i^{(d)} f_j^{(d)} dx` on `[-a, a]`.
    fn deriv_gram(&self, d: usize) -> Vec<Vec<f64>> {
        let p = self.factors.len();
        let a = self.config.half_width;
        let s = a * self.dscale().powi(2 * d as i32);
        (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        s * (0..self.nodes.len())
                            .map(|k| self.weights[k] * self.table[i][d][k] * self.table[j][d][k])
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    }

    /// Reference derivative of factor `f` at the endpoint `t = +-1`.
    fn endpoint(&self, f: usize, d: usize, plus: bool) -> f64 {
        self.factors[f].deriv(d, if plus { 1.0 } else { -1.0 })
    }
}

/// Potential sampled at the tensor quadrature nodes, in [`GalerkinBasis::quadrature_points`] order.
pub fn sample_potential(basis: &GalerkinBasis, q: &ComplexField) -> Result<Vec<C64>> {
    if q.grid.n != basis.config.n {
        return Err(Error::GridMismatch);
    }
    let a = basis.config.half_width;
    if a > q.grid.half_width {
        return Err(Error::Contract(format!(
            "box half-width {a} exceeds the grid half-width {}",
            q.grid.half_width
        )));
    }
    let (pts, _) = basis.quadrature_points();
    Ok(pts.par_iter().map(|x| sample_field(q, x, 5)).collect())
}

pub fn sample_fn(basis: &GalerkinBasis, f: impl Fn(&[f64]) -> C64 + Sync) -> Vec<C64> {
    let (pts, _) = basis.quadrature_points();
    pts.par_iter().map(|x| f(x)).collect()
}

/// All multi-indices of length `n` and order `m`, with `m! / alpha!`.
pub fn multinomial_terms(n: usize, m: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(n: usize, m: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![m]];
        }
        let mut out = Vec::new();
        for a in 0..=m {
            for mut rest in rec(n - 1, m - a) {
                rest.insert(0, a);
                out.push(rest);
            }
        }
        out
    }
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    rec(n, m)
        .into_iter()
        .map(|alpha| {
            let c = fact(m) / alpha.iter().map(|&k| fact(k)).product::<f64>();
            (alpha, c)
        })
        .collect()
}

/// Gram matrices of the sesquilinear form over the combined basis.
#[derive(Debug, Clone)]
pub struct FormMatrices {
    pub principal: DMatrix<C64>,
    pub potential: DMatrix<C64>,
    pub n_interior: usize,
    /// True when `q` is real and nonnegative at every node.
    pub coercive: bool,
}

impl FormMatrices {
    pub fn total(&self) -> DMatrix<C64> {
        &self.principal + &self.potential
    }

    pub fn n_trace(&self) -> usize {
        self.principal.nrows() - self.n_interior
    }

    /// Form matrices for the potential `conj(q)`.
    pub fn conjugate_potential(&self) -> Self {
        Self {
            principal: self.principal.clone(),
            potential: self.potential.map(|v| v.conj()),
            n_interior: self.n_interior,
            coercive: self.coercive,
        }
    }
}

/// Assembles `sum_{|alpha| = m} (m!/alpha!) int D^alpha u D^alpha v` and `int q u v`.
pub fn assemble_form(basis: &GalerkinBasis, q_nodes: &[C64]) -> Result<FormMatrices> {
    let n = basis.config.n;
    let m = basis.config.m;
    let q = basis.nodes.len();
    if q_nodes.len() != q.pow(n as u32) {
        return Err(Error::Contract(format!(
            "potential has {} samples, expected {}",
            q_nodes.len(),
            q.pow(n as u32)
        )));
    }
    let nb = basis.len();
    let grams: Vec<Vec<Vec<f64>>> = (0..=m).map(|d| basis.deriv_gram(d)).collect();
    let terms = multinomial_terms(n, m);
    let funcs = &basis.functions;
    let rows: Vec<Vec<C64>> = (0..nb)
        .into_par_iter()
        .map(|i| {
            (0..nb)
                .map(|j| {
                    let v: f64 = terms
                        .iter()
                        .map(|(alpha, c)| {
                            c * (0..n)
                                .map(|d| grams[alpha[d]][funcs[i][d]][funcs[j][d]])
                                .product::<f64>()
                        })
                        .sum();
                    C64::new(v, 0.0)
                })
                .collect()
        })
        .collect();
    let principal = DMatrix::from_fn(nb, nb, |i, j| rows[i][j]);

    let zero = q_nodes.iter().all(|v| v.norm() == 0.0);
    let coercive = q_nodes.iter().all(|v| v.im == 0.0 && v.re >= 0.0);
    let potential = if zero {
        DMatrix::zeros(nb, nb)
    } else {
        let t = potential_tensor(basis, q_nodes);
        let p = basis.factors_per_axis();
        let pp = p * p;
        DMatrix::from_fn(nb, nb, |i, j| {
            let mut flat = 0usize;
            for d in 0..n {
                flat = flat * pp + funcs[i][d] * p + funcs[j][d];
            }
            t[flat]
        })
    };
    Ok(FormMatrices {
        principal,
        potential,
        n_interior: basis.n_interior,
        coercive,
    })
}

/// Sum factorization of `int q f_{i_1} f_{j_1} ... f_{i_n} f_{j_n}` over all 1-D pairs.
fn potential_tensor(basis: &GalerkinBasis, q_nodes: &[C64]) -> Vec<C64> {
    let n = basis.config.n;
    let q = basis.nodes.len();
    let p = basis.factors_per_axis();
    let pp = p * p;
    let a = basis.config.half_width;
    // c[(i, j)][k] = a w_k f_i(t_k) f_j(t_k)
    let c: Vec<Vec<f64>> = (0..pp)
        .map(|ij| {
            let (i, j) = (ij / p, ij % p);
            (0..q)
                .map(|k| a * basis.weights[k] * basis.table[i][0][k] * basis.table[j][0][k])
                .collect()
        })
        .collect();
    let mut t = q_nodes.to_vec();
    for d in 0..n {
        let outer = pp.pow(d as u32);
        let inner = q.pow((n - d - 1) as u32);
        let mut next = vec![C64::new(0.0, 0.0); outer * pp * inner];
        next.par_chunks_mut(pp * inner)
            .enumerate()
            .for_each(|(o, out)| {
                let src = &t[o * q * inner..(o + 1) * q * inner];
                for (ij, cij) in c.iter().enumerate() {
                    let dst = &mut out[ij * inner..(ij + 1) * inner];
                    for (k, &w) in cij.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        let row = &src[k * inner..(k + 1) * inner];
                        for (o2, v) in dst.iter_mut().zip(row) {
                            *o2 += v * w;
                        }
                    }
                }
            });
        t = next;
    }
    t
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub relative: f64,
    pub near_singular: bool,
    /// `q` real and nonnegative, where coercivity forces `sigma_min > 0`.
    pub coercive: bool,
    pub method: String,
    pub passed: bool,
}

/// Threshold on `sigma_min / sigma_max` below which the interior block counts as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-8;

/// Dense SVD is used up to this interior size, inverse iteration above.
pub const SVD_LIMIT: usize = 600;

fn interior_block(forms: &FormMatrices) -> DMatrix<C64> {
    let ni = forms.n_interior;
    let g = forms.total();
    g.view((0, 0), (ni, ni)).into_owned()
}

fn power_sigma(apply: impl Fn(&DVector<C64>) -> DVector<C64>, dim: usize, iters: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut x = DVector::from_fn(dim, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = x.norm();
        x /= C64::new(nx, 0.0);
        let y = apply(&x);
        est = y.norm();
        if !(est > 0.0) || !est.is_finite() {
            return est;
        }
        x = y;
    }
    est
}

/// Smallest and largest singular values of the interior block.
pub fn check_assumption_a(forms: &FormMatrices) -> AssumptionReport {
    let a = interior_block(forms);
    let ni = a.nrows();
    let (smin, smax, method) = if ni <= SVD_LIMIT {
        let sv = a.clone().singular_values();
        let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sv.iter().cloned().fold(0.0, f64::max);
        (lo, hi, "svd")
    } else {
        let ah = a.adjoint();
        let smax = power_sigma(|x| &ah * (&a * x), ni, 60).sqrt();
        let lu = a.clone().lu();
        let luh = ah.clone().lu();
        let inv = power_sigma(
            |x| match luh.solve(x).and_then(|y| lu.solve(&y)) {
                Some(z) => z,
                None => DVector::from_element(ni, C64::new(f64::INFINITY, 0.0)),
            },
            ni,
            60,
        );
        let smin = if inv.is_finite() && inv > 0.0 {
            1.0 / inv.sqrt()
        } else {
            0.0
        };
        (smin, smax, "inverse-iteration")
    };
    let relative = if smax > 0.0 { smin / smax } else { 0.0 };
    let near_singular = relative < SINGULAR_THRESHOLD;
    let coercive = forms.coercive;
    AssumptionReport {
        sigma_min: smin,
        sigma_max: smax,
        relative,
        near_singular,
        coercive,
        method: method.into(),
        passed: !(coercive && near_singular),
    }
}

/// Lowest eigenvalue of the discrete Dirichlet problem `(-Delta)^m v = lambda v`.
pub fn lowest_dirichlet_eigenvalue(basis: &GalerkinBasis) -> Result<f64> {
    let nq = basis.nodes.len().pow(basis.config.n as u32);
    let forms = assemble_form(basis, &vec![C64::new(1.0, 0.0); nq])?;
    let ni = basis.n_interior;
    let k = forms.principal.view((0, 0), (ni, ni)).map(|v| v.re);
    let mass = forms.potential.view((0, 0), (ni, ni)).map(|v| v.re);
    let chol = mass
        .cholesky()
        .ok_or_else(|| Error::Numerical("interior mass matrix not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let sym = &linv * k * linv.transpose();
    let sym = (&sym + sym.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    Ok(ev.iter().cloned().fold(f64::INFINITY, f64::min))
}

/// Factorized interior block, shared across trace columns.
pub struct DirichletSolver {
    forms: FormMatrices,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    pub assumption: AssumptionReport,
}

impl DirichletSolver {
    pub fn new(forms: &FormMatrices) -> Result<Self> {
        let ni = forms.n_interior;
        if ni > DIRECT_SOLVE_LIMIT {
            return Err(Error::Unsupported(format!(
                "{ni} interior unknowns exceed the direct-solve limit {DIRECT_SOLVE_LIMIT}"
            )));
        }
        let assumption = check_assumption_a(forms);
        if assumption.near_singular {
            return Err(Error::AssumptionAViolated {
                sigma_min: assumption.sigma_min,
            });
        }
        let lu = interior_block(forms).lu();
        Ok(Self {
            forms: forms.clone(),
            lu,
            assumption,
        })
    }

    /// Full coefficient vector `[v; f]` of the solution with trace coefficients `f`.
    pub fn solve(&self, f: &[C64]) -> Result<Vec<C64>> {
        let ni = self.forms.n_interior;
        let nt = self.forms.n_trace();
        if f.len() != nt {
            return Err(Error::Contract(format!(
                "trace data has length {}, expected {nt}",
                f.len()
            )));
        }
        let g = self.forms.total();
        let fv = DVector::from_column_slice(f);
        let rhs = -(g.view((0, ni), (ni, nt)) * &fv);
        let v = self.lu.solve(&rhs).ok_or(Error::AssumptionAViolated {
            sigma_min: self.assumption.sigma_min,
        })?;
        Ok(v.iter().chain(f.iter()).cloned().collect())
    }

    /// Solutions for every trace basis vector, as columns `[V; I]`.
    pub fn solve_all(&self) -> Result<DMatrix<C64>> {
        let ni = self.forms.n_interior;
        let nt = self.forms.n_trace();
        let g = self.forms.total();
        let rhs = -g.view((0, ni), (ni, nt)).into_owned();
        let v = self.lu.solve(&rhs).ok_or(Error::AssumptionAViolated {
            sigma_min: self.assumption.sigma_min,
        })?;
        let mut u = DMatrix::zeros(ni + nt, nt);
        u.view_mut((0, 0), (ni, nt)).copy_from(&v);
        for k in 0..nt {
            u[(ni + k, k)] = C64::new(1.0, 0.0);
        }
        Ok(u)
    }
}

/// Relative Galerkin residual `||G_I u|| / (||G_IB|| ||f||)` of a coefficient vector.
pub fn galerkin_residual(forms: &FormMatrices, u: &[C64]) -> f64 {
    let ni = forms.n_interior;
    let g = forms.total();
    let uv = DVector::from_column_slice(u);
    let r = g.rows(0, ni) * &uv;
    let scale = g.rows(0, ni).norm() * uv.norm();
    if scale > 0.0 {
        r.norm() / scale
    } else {
        0.0
    }
}

pub fn solve_dirichlet(forms: &FormMatrices, f: &[C64]) -> Result<Vec<C64>> {
    DirichletSolver::new(forms)?.solve(f)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DnMap {
    /// `matrix[h][f] = <Lambda f, conj h> = a(u_f, w_h)`.
    #[serde(skip)]
    pub matrix: DMatrix<C64>,
    pub n: usize,
    pub m: usize,
    pub half_width: f64,
    pub interior_degree: usize,
    pub trace_degree: usize,
    pub quad_points: usize,
    pub extension_residual: f64,
    pub symmetry_residual: f64,
    pub sigma_min: f64,
}

impl DnMap {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn same_basis(&self, other: &DnMap) -> bool {
        self.n == other.n
            && self.m == other.m
            && self.half_width == other.half_width
            && self.trace_degree == other.trace_degree
            && self.size() == other.size()
    }

    /// `conj(g)^T Lambda f`.
    pub fn pair(&self, f: &[C64], g: &[C64]) -> C64 {
        let fv = DVector::from_column_slice(f);
        let lf = &self.matrix * fv;
        g.iter().zip(lf.iter()).map(|(a, b)| a.conj() * b).sum()
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Tolerance of the extension-independence check.
pub const EXTENSION_TOL: f64 = 1e-9;

/// Assembles `Lambda` and checks it against lifts perturbed by interior functions.
pub fn assemble_dn_map(basis: &GalerkinBasis, forms: &FormMatrices) -> Result<DnMap> {
    let solver = DirichletSolver::new(forms)?;
    let ni = forms.n_interior;
    let nt = forms.n_trace();
    let u = solver.solve_all()?;
    let gu = forms.total() * &u;
    let lambda = gu.view((ni, 0), (nt, nt)).into_owned();

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let z = DMatrix::from_fn(ni, nt, |_, _| C64::new(rng.gen::<f64>() - 0.5, 0.0));
    let perturbed = &lambda + z.transpose() * gu.view((0, 0), (ni, nt));
    let scale = max_abs(&lambda).max(f64::MIN_POSITIVE);
    let extension_residual = max_abs(&(&perturbed - &lambda)) / scale;
    if extension_residual > EXTENSION_TOL {
        return Err(Error::Invariant(format!(
            "DN map depends on the lift: relative change {extension_residual:.2e}"
        )));
    }
    let symmetry_residual = max_abs(&(&lambda - lambda.transpose())) / scale;
    Ok(DnMap {
        matrix: lambda,
        n: basis.config.n,
        m: basis.config.m,
        half_width: basis.config.half_width,
        interior_degree: basis.config.interior_degree,
        trace_degree: basis.config.trace_degree,
        quad_points: basis.nodes.len(),
        extension_residual,
        symmetry_residual,
        sigma_min: solver.assumption.sigma_min,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    /// `int (q_2 - q_1) u_1 conj(u_2)`.
    pub volume: C64,
    /// `conj(f_2)^T (Lambda_2 - Lambda_1) f_1`.
    pub boundary: C64,
    pub residual: f64,
    pub relative: f64,
}

/// Both sides of `int (q_2 - q_1) u_1 conj(u_2) = <(Lambda_2 - Lambda_1) f_1, conj f_2>`
/// for `u_1` solving with `q_1` and `u_2` solving with `conj(q_2)`.
pub fn integral_identity_check(
    forms1: &FormMatrices,
    forms2: &FormMatrices,
    u1: &[C64],
    u2: &[C64],
    dn1: &DnMap,
    dn2: &DnMap,
) -> Result<IdentityReport> {
    if !dn1.same_basis(dn2) || u1.len() != u2.len() || u1.len() != forms1.principal.nrows() {
        return Err(Error::Contract(
            "identity check needs solutions and DN maps on one basis".into(),
        ));
    }
    let ni = forms1.n_interior;
    let dv = &forms2.potential - &forms1.potential;
    let u1v = DVector::from_column_slice(u1);
    let u2v = DVector::from_column_slice(u2);
    let volume = u2v.dotc(&(dv * &u1v));
    let dl = &dn2.matrix - &dn1.matrix;
    let f1 = u1v.rows(ni, u1.len() - ni).into_owned();
    let f2 = u2v.rows(ni, u2.len() - ni).into_owned();
    let boundary = f2.dotc(&(dl * f1));
    let residual = (volume - boundary).norm();
    let denom = volume.norm().max(boundary.norm());
    let relative = if denom > 0.0 { residual / denom } else { 0.0 };
    Ok(IdentityReport {
        volume,
        boundary,
        residual,
        relative,
    })
}

/// Discrete `H^m` norm (all derivatives up to order `m`) and `L^p` norm of `u` at the quadrature nodes.
pub fn discrete_norms(basis: &GalerkinBasis, c: &[C64], p: f64) -> (f64, f64) {
    let (pts, wts) = basis.quadrature_points();
    let n = basis.config.n;
    let m = basis.config.m;
    let mut alphas = Vec::new();
    for k in 0..=m {
        alphas.extend(multinomial_terms(n, k).into_iter().map(|(a, _)| a));
    }
    let mut hm = 0.0;
    let mut lp = 0.0;
    for (x, w) in pts.iter().zip(&wts) {
        for a in &alphas {
            hm += w * basis.eval_coeffs(c, x, a).norm_sqr();
        }
        lp += w * basis.eval_coeffs(c, x, &vec![0; n]).norm().powf(p);
    }
    (hm.sqrt(), lp.powf(1.0 / p))
}

/// Least-squares trace coefficients of boundary data `g(x, outward_axis, sign, k) = d_nu^k u(x)`.
pub fn project_trace(
    basis: &GalerkinBasis,
    g: impl Fn(&[f64], usize, bool, usize) -> C64 + Sync,
) -> Result<Vec<C64>> {
    let n = basis.config.n;
    let m = basis.config.m;
    let a = basis.config.half_width;
    let ni = basis.n_interior;
    let funcs = &basis.functions[ni..];
    let nt = funcs.len();
    let mass = basis.deriv_gram(0);
    let q = basis.nodes.len();
    // normal derivative of factor f on face (d, sign): (+-1)^k f^{(k)}(+-1) / a^k
    let normal = |f: usize, k: usize, plus: bool| {
        let sgn = if plus || k.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        sgn * basis.endpoint(f, k, plus) * basis.dscale().powi(k as i32)
    };
    let mut gram = DMatrix::<f64>::zeros(nt, nt);
    let mut rhs = DVector::<C64>::zeros(nt);
    for d in 0..n {
        for plus in [false, true] {
            for k in 0..m {
                for i in 0..nt {
                    let ci = normal(funcs[i][d], k, plus);
                    if ci == 0.0 {
                        continue;
                    }
                    for j in 0..nt {
                        let cj = normal(funcs[j][d], k, plus);
                        if cj == 0.0 {
                            continue;
                        }
                        let mut v = ci * cj;
                        for e in (0..n).filter(|&e| e != d) {
                            v *= mass[funcs[i][e]][funcs[j][e]];
                        }
                        gram[(i, j)] += v;
                    }
                }
                // face quadrature of g against the traces
                let others: Vec<usize> = (0..n).filter(|&e| e != d).collect();
                let count = q.pow((n - 1) as u32);
                let samples: Vec<(Vec<usize>, C64, f64)> = (0..count)
                    .into_par_iter()
                    .map(|c| {
                        let mut rest = c;
                        let mut x = vec![0.0; n];
                        let mut ks = vec![0usize; n - 1];
                        let mut w = 1.0;
                        for (slot, &e) in others.iter().enumerate().rev() {
                            let kk = rest % q;
                            rest /= q;
                            ks[slot] = kk;
                            x[e] = a * basis.nodes[kk];
                            w *= a * basis.weights[kk];
                        }
                        x[d] = if plus { a } else { -a };
                        (ks, g(&x, d, plus, k), w)
                    })
                    .collect();
                for i in 0..nt {
                    let ci = normal(funcs[i][d], k, plus);
                    if ci == 0.0 {
                        continue;
                    }
                    let mut acc = C64::new(0.0, 0.0);
                    for (ks, gv, w) in &samples {
                        let mut phi = ci;
                        for (slot, &e) in others.iter().enumerate() {
                            phi *= basis.table[funcs[i][e]][0][ks[slot]];
                        }
                        acc += gv * (phi * w);
                    }
                    rhs[i] += acc;
                }
            }
        }
    }
    let chol = gram
        .map(|v| C64::new(v, 0.0))
        .cholesky()
        .ok_or_else(|| Error::Numerical("trace Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs).iter().cloned().collect())
}
