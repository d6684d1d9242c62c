use polycgo::cgo::bump_potential;
use polycgo::forward::*;
use polycgo::{Error, GridSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn basis(n: usize, m: usize, a: f64, k: usize, kt: usize) -> GalerkinBasis {
    GalerkinBasis::new(&ForwardConfig {
        n,
        m,
        half_width: a,
        interior_degree: k,
        trace_degree: kt,
        quad_points: None,
    })
    .unwrap()
}

fn zero_q(b: &GalerkinBasis) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); b.nodes.len().pow(b.config.n as u32)]
}

fn bump_q(b: &GalerkinBasis, h: f64) -> Vec<C64> {
    let g = GridSpec::new(b.config.n, b.config.m, 32, 3.0).unwrap();
    let q = bump_potential(&g, h, 1.2, &vec![0.1; b.config.n]);
    sample_potential(b, &q).unwrap()
}

/// Trace coefficients of u = x1 x2 + x1^2 - x3^2, which lies in the discrete space.
fn harmonic_trace(b: &GalerkinBasis) -> Vec<C64> {
    project_trace(b, |x, _, _, _| {
        C64::new(x[0] * x[1] + x[0] * x[0] - x[2] * x[2], 0.0)
    })
    .unwrap()
}

#[test]
fn harmonic_polynomial_is_reproduced_and_flux_matches() {
    let b = basis(3, 1, 1.5, 4, 3);
    let forms = assemble_form(&b, &zero_q(&b)).unwrap();
    let f = harmonic_trace(&b);
    let u = solve_dirichlet(&forms, &f).unwrap();
    assert!(galerkin_residual(&forms, &u) < 1e-10);
    let x = [0.3, -0.7, 0.45];
    let got = b.eval_coeffs(&u, &x, &[0, 0, 0]);
    assert!((got.re - (x[0] * x[1] + x[0] * x[0] - x[2] * x[2])).abs() < 1e-10);
    // <Lambda f, w_h> equals the boundary flux int d_nu u w_h by face quadrature
    let dn = assemble_dn_map(&b, &forms).unwrap();
    let ni = b.n_interior;
    let lf = &dn.matrix * nalgebra::DVector::from_column_slice(&f);
    let grad = |x: &[f64]| [x[1] + 2.0 * x[0], x[0], -2.0 * x[2]];
    let (nodes, weights) = (b.nodes.clone(), b.weights.clone());
    let a = 1.5;
    for h in [0, 7, b.n_trace() / 2, b.n_trace() - 1] {
        let mut flux = 0.0;
        for d in 0..3 {
            for sgn in [-1.0, 1.0] {
                for (i, ti) in nodes.iter().enumerate() {
                    for (j, tj) in nodes.iter().enumerate() {
                        let mut x = [0.0; 3];
                        let others: Vec<usize> = (0..3).filter(|&e| e != d).collect();
                        x[d] = sgn * a;
                        x[others[0]] = a * ti;
                        x[others[1]] = a * tj;
                        let w = a * a * weights[i] * weights[j];
                        flux += w * sgn * grad(&x)[d] * b.eval(ni + h, &x, &[0, 0, 0]);
                    }
                }
            }
        }
        assert!(
            (lf[h].re - flux).abs() < 1e-10 * (1.0 + flux.abs()),
            "h={h} {} {flux}",
            lf[h].re
        );
    }
}

#[test]
fn dn_map_invariants_for_real_bump() {
    let b = basis(3, 1, 1.5, 6, 4);
    let forms = assemble_form(&b, &bump_q(&b, 3.0)).unwrap();
    let dn = assemble_dn_map(&b, &forms).unwrap();
    assert!(dn.extension_residual <= 1e-9);
    assert!(dn.symmetry_residual <= 1e-8);
}

#[test]
fn dn_map_converges_under_refinement() {
    let coarse = basis(3, 1, 1.5, 6, 4);
    let fine = basis(3, 1, 1.5, 12, 4);
    let l0 = assemble_dn_map(&coarse, &assemble_form(&coarse, &zero_q(&coarse)).unwrap()).unwrap();
    let l1 = assemble_dn_map(&fine, &assemble_form(&fine, &zero_q(&fine)).unwrap()).unwrap();
    assert_eq!(l0.size(), l1.size());
    let scale = l1.matrix.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let err = (&l0.matrix - &l1.matrix)
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        / scale;
    eprintln!("refinement entrywise error {err:.3e}");
    assert!(err <= 0.01);
}

#[test]
fn assumption_a_diagnostics() {
    let b = basis(3, 1, 1.0, 5, 2);
    let nq = b.nodes.len().pow(3);
    let free = check_assumption_a(&assemble_form(&b, &zero_q(&b)).unwrap());
    assert!(free.sigma_min > 0.0 && !free.near_singular && free.passed);

    let lam = lowest_dirichlet_eigenvalue(&b).unwrap();
    // continuum value 3 (pi / 2)^2 for the unit box
    assert!((lam - 3.0 * (std::f64::consts::PI / 2.0).powi(2)).abs() < 1e-3 * lam);
    let forms = assemble_form(&b, &vec![C64::new(-lam, 0.0); nq]).unwrap();
    let rep = check_assumption_a(&forms);
    assert!(rep.near_singular, "{rep:?}");
    assert!(matches!(
        solve_dirichlet(&forms, &vec![C64::new(1.0, 0.0); b.n_trace()]),
        Err(Error::AssumptionAViolated { .. })
    ));

    let mut last = free.sigma_min;
    for c in [10.0, 100.0, 1000.0] {
        let r = check_assumption_a(&assemble_form(&b, &vec![C64::new(c, 0.0); nq]).unwrap());
        assert!(r.sigma_min > last);
        last = r.sigma_min;
    }
}

#[test]
fn inverse_iteration_agrees_with_svd() {
    let b = basis(3, 1, 1.0, 9, 2);
    assert!(b.n_interior > SVD_LIMIT);
    let forms = assemble_form(&b, &bump_q(&b, -4.0)).unwrap();
    let it = check_assumption_a(&forms);
    assert_eq!(it.method, "inverse-iteration");
    let ni = b.n_interior;
    let sv = forms
        .total()
        .view((0, 0), (ni, ni))
        .into_owned()
        .singular_values();
    let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((it.sigma_min - lo).abs() < 1e-6 * lo);
}

fn solve_pair(
    b: &GalerkinBasis,
    q1: &[C64],
    q2: &[C64],
) -> (FormMatrices, FormMatrices, DnMap, DnMap) {
    let f1 = assemble_form(b, q1).unwrap();
    let f2 = assemble_form(b, q2).unwrap();
    let d1 = assemble_dn_map(b, &f1).unwrap();
    let d2 = assemble_dn_map(b, &f2).unwrap();
    (f1, f2, d1, d2)
}

#[test]
fn integral_identity_and_negative_control() {
    let b = basis(3, 1, 1.5, 6, 4);
    let q1 = bump_q(&b, 2.0);
    let q2: Vec<C64> = q1
        .iter()
        .zip(bump_q(&b, 1.0))
        .map(|(a, c)| a + c * C64::new(0.5, 0.5))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nt = b.n_trace();
    let t1: Vec<C64> = (0..nt)
        .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let t2: Vec<C64> = (0..nt)
        .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();

    let (f1, f1b, d1, d1b) = solve_pair(&b, &q1, &q1);
    let u1 = solve_dirichlet(&f1, &t1).unwrap();
    let u2 = solve_dirichlet(&f1b.conjugate_potential(), &t2).unwrap();
    let same = integral_identity_check(&f1, &f1b, &u1, &u2, &d1, &d1b).unwrap();
    assert!(same.volume.norm() <= 1e-9 && same.boundary.norm() <= 1e-9);

    let (f1, f2, d1, d2) = solve_pair(&b, &q1, &q2);
    let u1 = solve_dirichlet(&f1, &t1).unwrap();
    let u2 = solve_dirichlet(&f2.conjugate_potential(), &t2).unwrap();
    let good = integral_identity_check(&f1, &f2, &u1, &u2, &d1, &d2).unwrap();
    assert!(good.relative <= 1e-6, "{good:?}");

    let mut bad_u2 = u2.clone();
    for v in bad_u2.iter_mut().take(b.n_interior) {
        *v += C64::new(rng.gen::<f64>() - 0.5, 0.0) * 0.1;
    }
    let bad = integral_identity_check(&f1, &f2, &u1, &bad_u2, &d1, &d2).unwrap();
    assert!(
        bad.relative >= 1e3 * good.relative.max(1e-16),
        "{bad:?} vs {good:?}"
    );
}

#[test]
fn biharmonic_smoke_in_low_dimension() {
    for n in [2, 3] {
        let b = basis(n, 2, 1.0, 4, 2);
        let forms = assemble_form(&b, &bump_q(&b, 1.0)).unwrap();
        let dn = assemble_dn_map(&b, &forms).unwrap();
        assert!(dn.symmetry_residual <= 1e-8 && dn.extension_residual <= 1e-9);
        let lam = lowest_dirichlet_eigenvalue(&b).unwrap();
        assert!(lam > 0.0);
    }
}

#[test]
fn sobolev_chain_ratio_is_resolution_stable() {
    let p = 6.0; // 2n / (n - 2m) for n = 3, m = 1
    let mut cfg = ForwardConfig {
        n: 3,
        m: 1,
        half_width: 1.0,
        interior_degree: 3,
        trace_degree: 2,
        quad_points: Some(14),
    };
    let b0 = GalerkinBasis::new(&cfg).unwrap();
    cfg.quad_points = Some(28);
    let b1 = GalerkinBasis::new(&cfg).unwrap();
    for i in (0..b0.len()).step_by(9) {
        let mut c = vec![C64::new(0.0, 0.0); b0.len()];
        c[i] = C64::new(1.0, 0.0);
        let (h0, l0) = discrete_norms(&b0, &c, p);
        let (h1, l1) = discrete_norms(&b1, &c, p);
        let (r0, r1) = (l0 / h0, l1 / h1);
        assert!(r0 / r1 < 2.0 && r1 / r0 < 2.0);
    }
}

#[test]
fn form_bound_is_stable_under_refinement() {
    let mut consts = Vec::new();
    for k in [4, 6] {
        let b = basis(2, 1, 1.0, k, 2);
        let forms = assemble_form(&b, &bump_q(&b, 2.0)).unwrap();
        let g = forms.total();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = 0.0f64;
        for _ in 0..20 {
            let u: Vec<C64> = (0..b.len())
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, 0.0))
                .collect();
            let v: Vec<C64> = (0..b.len())
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, 0.0))
                .collect();
            let uv = nalgebra::DVector::from_column_slice(&u);
            let vv = nalgebra::DVector::from_column_slice(&v);
            let form = vv.dotc(&(&g * &uv)).norm();
            let (hu, _) = discrete_norms(&b, &u, 2.0);
            let (hv, _) = discrete_norms(&b, &v, 2.0);
            c = c.max(form / (hu * hv));
        }
        consts.push(c);
    }
    // |a(u, v)| <= (1 + sup|q|) |u|_{H^1} |v|_{H^1}; sup|q| = 2e for this bump
    let bound = 1.0 + 2.0 * std::f64::consts::E;
    assert!(consts.iter().all(|&c| c <= bound), "{consts:?}");
    assert!(
        consts[1] / consts[0] < 2.0 && consts[0] / consts[1] < 2.0,
        "{consts:?}"
    );
}
