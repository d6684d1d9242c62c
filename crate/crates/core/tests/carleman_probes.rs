use polycgo::carleman::*;
use polycgo::{ComplexField, GridSpec};

fn grid() -> GridSpec {
    GridSpec::new(3, 1, 64, 4.0).unwrap()
}

#[test]
fn linear_ratio_is_uniform_in_k() {
    let u = radial_bump(&grid(), &[0.0; 3], 1.0);
    let rep = probe_linear(3, 1, &axis_k_list(3, &[1.0, 2.0, 4.0, 8.0, 16.0]), &[u]).unwrap();
    assert_eq!(rep.rows.len(), 5);
    assert!(rep.spread[0] <= 3.0, "spread {}", rep.spread[0]);
}

#[test]
fn zero_weight_gives_finite_sobolev_ratio() {
    let g = grid();
    let samples = vec![
        radial_bump(&g, &[0.0; 3], 1.2),
        tensor_bump(&g, &[0.3, -0.2, 0.0], 1.0),
        localized_random(&g, 1.5, 4, 9),
    ];
    let rep = probe_linear(3, 1, &axis_k_list(3, &[0.0]), &samples).unwrap();
    assert_eq!(rep.rows.len(), 3);
    assert!(rep
        .rows
        .iter()
        .all(|r| r.ratio.is_finite() && r.ratio > 0.0));
}

#[test]
fn translation_with_matching_weight_is_exact() {
    let g = grid();
    let h = g.spacing();
    let u = radial_bump(&g, &[0.0; 3], 1.0);
    let v = radial_bump(&g, &[8.0 * h, -4.0 * h, 0.0], 1.0);
    let k = vec![vec![3.0, 1.0, -2.0]];
    let a = probe_linear(3, 1, &k, &[u]).unwrap().rows[0].ratio;
    let b = probe_linear(3, 1, &k, &[v]).unwrap().rows[0].ratio;
    assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
}

#[test]
fn inverted_k_list_sweeps_the_same_ratios() {
    let u = tensor_bump(&grid(), &[0.0; 3], 1.0);
    let mags = [0.25, 0.5, 1.0, 2.0, 4.0];
    let list = axis_k_list(3, &mags);
    let inverted: Vec<Vec<f64>> = list
        .iter()
        .map(|k| {
            let k2: f64 = k.iter().map(|v| v * v).sum();
            k.iter().map(|v| v / k2).collect()
        })
        .collect();
    let mut a: Vec<f64> = probe_linear(3, 1, &list, std::slice::from_ref(&u))
        .unwrap()
        .rows
        .iter()
        .map(|r| r.ratio)
        .collect();
    let mut b: Vec<f64> = probe_linear(3, 1, &inverted, &[u])
        .unwrap()
        .rows
        .iter()
        .map(|r| r.ratio)
        .collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x);
    }
}

#[test]
fn log_probe_records_ratio_and_flags_small_delta() {
    let u = annular_bump(&grid(), 1.0, 2.0);
    let good = CarlemanConfig::new(3, 1, Weight::Log { t: 0.5 + 0.5 }).unwrap();
    let rep = probe_log(&good, std::slice::from_ref(&u)).unwrap();
    assert!(rep.constant.is_finite() && rep.constant > 0.0);
    assert!(!rep.delta_flagged);
    let bad = CarlemanConfig::new(3, 1, Weight::Log { t: 0.5 + 1e-6 }).unwrap();
    assert!(probe_log(&bad, &[u]).unwrap().delta_flagged);
}

#[test]
fn log_ratio_is_scale_invariant() {
    let g = grid();
    let c = CarlemanConfig::new(3, 1, Weight::Log { t: 1.0 }).unwrap();
    let a = probe_log(&c, &[annular_bump(&g, 1.0, 2.0)])
        .unwrap()
        .constant;
    let b = probe_log(&c, &[annular_bump(&g, 1.25, 2.5)])
        .unwrap()
        .constant;
    assert!((a - b).abs() <= 0.05 * a, "{a} vs {b}");
}

#[test]
fn zero_sample_is_skipped_in_both_probes() {
    let z = ComplexField::zeros(&grid());
    let c = CarlemanConfig::new(3, 1, Weight::Log { t: 1.0 }).unwrap();
    assert_eq!(
        probe_log(&c, std::slice::from_ref(&z))
            .unwrap()
            .skipped
            .len(),
        1
    );
    assert_eq!(
        probe_linear(3, 1, &axis_k_list(3, &[2.0]), &[z])
            .unwrap()
            .skipped
            .len(),
        1
    );
}
