use polycgo::cgo::{
    build_cgo, bump_potential, check_regularity, probe_operator_norm, truncate, CgoConfig,
    Potential,
};
use polycgo::green::{canonical_zeta, s_family};
use polycgo::{assemble, GreenConfig, GridSpec};
use proptest::prelude::*;

#[test]
fn remainder_shrinks_on_compact_set() {
    let g = GridSpec::new(3, 1, 64, 8.0).unwrap();
    let p = Potential::new(bump_potential(&g, 5.0, 2.0, &[0.0; 3])).unwrap();
    let mut prev = f64::INFINITY;
    for s in [8.0, 16.0] {
        let op = assemble(&canonical_zeta(3, s).unwrap(), 1, &g, &GreenConfig::naive()).unwrap();
        let sol = build_cgo(&p, &op, &CgoConfig::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.fixed_point_residual <= 1e-8);
        assert!(sol.equation_residual <= 1e-6);
        if sol.contraction <= 0.5 {
            assert!(sol.v.l2() <= 2.0 * p.d2.l2());
        }
        assert!(sol.r_norm_k < 1.1 * prev);
        prev = sol.r_norm_k;
        let reg = check_regularity(&sol, &p, 1, 1.0).unwrap();
        assert!(reg.hm_seminorm.is_finite() && reg.qu_norm.is_finite() && reg.qu_norm > 0.0);
    }
}

#[test]
fn operator_norm_decays_like_inverse_s() {
    let g = GridSpec::new(3, 1, 32, 6.0).unwrap();
    let p = Potential::new(bump_potential(&g, 2.0, 1.5, &[0.0; 3])).unwrap();
    let fam = s_family(&g, 1, &[4.0, 8.0, 16.0, 32.0], &GreenConfig::naive()).unwrap();
    let rep = probe_operator_norm(&p, &fam, Some(10.0)).unwrap();
    assert!(rep.decreasing);
    assert!((rep.slope + 1.0).abs() < 0.15, "{}", rep.slope);
    assert!(rep.passed);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn factorization_and_truncation(h in 0.1f64..20.0, re in -1.0f64..1.0, tau in 0.0f64..5.0) {
        let g = GridSpec::new(3, 1, 16, 3.0).unwrap();
        let base = bump_potential(&g, h, 1.5, &[0.0; 3]);
        let q = base.scale(polycgo::C64::new(re, 1.0 - re.abs()));
        let p = Potential::new(q.clone()).unwrap();
        for i in 0..g.len() {
            prop_assert!((p.d1.data[i] * p.d2.data[i] - q.data[i]).norm() <= 1e-14 * (1.0 + q.data[i].norm()));
        }
        let t = truncate(&p, tau);
        for i in 0..g.len() {
            let (a, b) = (t.d2.data[i], p.d2.data[i]);
            prop_assert!(a.norm() <= b.norm());
            let expected = if b.norm() <= tau { b } else { polycgo::C64::new(0.0, 0.0) };
            prop_assert_eq!(a, expected);
        }
    }
}
