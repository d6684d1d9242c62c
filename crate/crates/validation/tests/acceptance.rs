//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all: `cargo test -p polycgo-validation --test acceptance`.
//! Run some: `cargo test -p polycgo-validation --test acceptance -- 3 7`.

use std::time::Instant;

use polycgo::carleman::{
    annular_bump, axis_k_list, probe_linear, probe_log, radial_bump, CarlemanConfig, Weight,
};
use polycgo::cgo::{build_cgo, bump_potential, probe_operator_norm, CgoConfig, Potential};
use polycgo::forward::{
    assemble_dn_map, assemble_form, integral_identity_check, sample_potential, solve_dirichlet,
    ForwardConfig, GalerkinBasis,
};
use polycgo::green::{
    canonical_zeta, probe_lp_bound, probe_weighted_decay, s_family, verify_chart_kernel,
    verify_fundamental, GaussianTest, GreenOperator,
};
use polycgo::recon::{low_pass, reconstruct, relative_l2_error, ReconstructConfig, Source};
use polycgo::symbol::{build_partition, ChartId, Diffeo, ZetaVector};
use polycgo::{assemble, ComplexField, GreenConfig, GridSpec, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(grid: &GridSpec) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        (-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()
    })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Green-operator families shared by criteria 3 and 4.
struct Families {
    m1: (Vec<GreenOperator>, ComplexField),
    m2: (Vec<GreenOperator>, ComplexField),
}

fn families() -> Families {
    let g1 = GridSpec::new(3, 1, 64, 8.0).unwrap();
    let f1 = gaussian(&g1);
    let m1 = s_family(&g1, 1, &[4.0, 8.0, 16.0, 32.0], &GreenConfig::paper()).unwrap();
    let g2 = GridSpec::new(5, 2, 16, 6.0).unwrap();
    let f2 = gaussian(&g2);
    let m2 = s_family(&g2, 2, &[4.0, 8.0, 16.0], &GreenConfig::paper()).unwrap();
    Families {
        m1: (m1, f1),
        m2: (m2, f2),
    }
}

fn c1_fundamental() -> Outcome {
    let grid = GridSpec::new(3, 1, 64, 8.0).unwrap();
    let f = gaussian(&grid);
    let mut pass = true;
    let mut parts = Vec::new();
    for s in [2.0, 4.0, 8.0] {
        let z = canonical_zeta(3, s).unwrap();
        let t = Instant::now();
        let rn = verify_fundamental(&assemble(&z, 1, &grid, &GreenConfig::naive()).unwrap(), &f)
            .unwrap();
        let tn = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let rp = verify_fundamental(&assemble(&z, 1, &grid, &GreenConfig::paper()).unwrap(), &f)
            .unwrap();
        let tp = t.elapsed().as_secs_f64();
        pass &= rn <= 1e-6 && rp <= 1e-2 && tn <= 60.0 && tp <= 60.0;
        parts.push(format!(
            "s={s}: naive {rn:.1e} ({tn:.1}s), paper {rp:.1e} ({tp:.1}s)"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c2_chart_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let tests: Vec<GaussianTest> = (0..10)
        .map(|_| GaussianTest {
            amplitude: rng.gen_range(0.5..2.0),
            center: (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            width: rng.gen_range(0.3..1.0),
        })
        .collect();
    let mut worst = Vec::new();
    for m in [2, 3] {
        worst.push(verify_chart_kernel(m, 4.0, &tests).unwrap());
    }
    let pass = worst.iter().all(|e| *e <= 1e-3);
    outcome(
        pass,
        format!(
            "max relative error m=2: {:.2e}, m=3: {:.2e}",
            worst[0], worst[1]
        ),
    )
}

fn c3_decay(fam: &Families) -> Outcome {
    let t = Instant::now();
    let d1 = probe_weighted_decay(&fam.m1.0, &fam.m1.1, -0.5).unwrap();
    let d2 = probe_weighted_decay(&fam.m2.0, &fam.m2.1, -1.5).unwrap();
    let pass = d1.slope <= -1.0 + 0.25 && d2.slope <= -2.0 + 0.25;
    outcome(
        pass,
        format!(
            "slope m=1 {:.3} (<= -0.75), m=2 {:.3} (<= -1.75), {:.0}s",
            d1.slope,
            d2.slope,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c4_lp(fam: &Families) -> Outcome {
    let l1 = probe_lp_bound(&fam.m1.0, &fam.m1.1).unwrap();
    let l2 = probe_lp_bound(&fam.m2.0, &fam.m2.1).unwrap();
    let pass = l1.max_over_min <= 3.0 && l2.max_over_min <= 3.0;
    outcome(
        pass,
        format!(
            "max/min m=1 {:.2}, m=2 {:.2} (<= 3)",
            l1.max_over_min, l2.max_over_min
        ),
    )
}

fn c5_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0usize;
    let mut total = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in [3usize, 5] {
        for s in [1.0, 4.0, 16.0] {
            for id in ChartId::all(n) {
                let d = Diffeo::new(id, s, n).unwrap();
                let mut hits = 0;
                while hits < 10_000 {
                    let mut xi: Vec<f64> =
                        (0..n).map(|_| rng.gen_range(-1.2 * s..1.2 * s)).collect();
                    xi[1] += s;
                    if !d.contains(&xi) {
                        continue;
                    }
                    hits += 1;
                    let j = d.jacobian(&xi);
                    lo = lo.min(j * n as f64 / 2.0);
                    hi = hi.max(j);
                    if !(j > 2.0 / n as f64 && j < 8.0) {
                        violations += 1;
                    }
                }
                total += hits;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations in {total} samples; min |det|/(2/n) {lo:.3}, max |det| {hi:.3}"),
    )
}

fn c6_partition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut sum_err, mut scale_err) = (0.0f64, 0.0f64);
    let mut count = 0;
    for n in [3usize, 5] {
        for s in [0.7, 4.0, 16.0] {
            let pu = build_partition(&ZetaVector::canonical(n, s), n).unwrap();
            for _ in 0..10_000 {
                let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0 * s..3.0 * s)).collect();
                let a = pu.eval(&xi);
                let b = pu.eval_direct(&xi);
                sum_err = sum_err.max((a.total() - 1.0).abs());
                scale_err = scale_err.max((a.chi1 - b.chi1).abs());
                for (p, q) in a.charts.iter().zip(&b.charts) {
                    scale_err = scale_err.max((p - q).abs());
                }
                count += 1;
            }
        }
    }
    outcome(
        sum_err <= 1e-12 && scale_err <= 1e-14,
        format!(
            "{count} points: unit-sum {sum_err:.1e} (<= 1e-12), scaling {scale_err:.1e} (<= 1e-14)"
        ),
    )
}

fn c7_cgo() -> Outcome {
    let g = GridSpec::new(3, 1, 64, 8.0).unwrap();
    let p = Potential::new(bump_potential(&g, 5.0, 2.0, &[0.0; 3])).unwrap();
    let mut contraction = Vec::new();
    let mut rk = Vec::new();
    let mut rq = Vec::new();
    let mut eq = 0.0f64;
    for s in [8.0, 16.0, 32.0] {
        let op = assemble(&canonical_zeta(3, s).unwrap(), 1, &g, &GreenConfig::naive()).unwrap();
        let sol = build_cgo(&p, &op, &CgoConfig::default()).unwrap();
        contraction.push(sol.contraction);
        rk.push(sol.r_norm_k);
        rq.push(sol.r_norm_q);
        eq = eq.max(sol.equation_residual);
    }
    let contract_ok = contraction[1] <= 0.5 && contraction[2] <= 0.5;
    let decrease_ok = rk.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let ratio =
        rq.iter().cloned().fold(0.0, f64::max) / rq.iter().cloned().fold(f64::INFINITY, f64::min);
    let uniform_ok = ratio <= 3.0;
    let eq_ok = eq <= 1e-6;
    outcome(
        contract_ok && decrease_ok && uniform_ok && eq_ok,
        format!(
            "contraction [{}] {}; |r|_K [{}] {}; |r|_6 [{}] max/min {ratio:.2} {}; eq residual {eq:.1e} {}",
            fmt_list(&contraction),
            ok(contract_ok),
            fmt_list(&rk),
            ok(decrease_ok),
            fmt_list(&rq),
            ok(uniform_ok),
            ok(eq_ok)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn c8_operator_norm() -> Outcome {
    let g = GridSpec::new(3, 1, 64, 8.0).unwrap();
    let p = Potential::new(bump_potential(&g, 5.0, 2.0, &[0.0; 3])).unwrap();
    let fam = s_family(&g, 1, &[4.0, 8.0, 16.0, 32.0], &GreenConfig::naive()).unwrap();
    let rep = probe_operator_norm(&p, &fam, None).unwrap();
    let norms: Vec<f64> = rep.rows.iter().map(|r| r.1).collect();
    outcome(
        rep.passed && rep.slope <= -0.75,
        format!(
            "norms [{}], slope {:.3} (<= -0.75), decreasing {}",
            fmt_list(&norms),
            rep.slope,
            rep.decreasing
        ),
    )
}

fn basis(k: usize, kt: usize) -> GalerkinBasis {
    GalerkinBasis::new(&ForwardConfig {
        n: 3,
        m: 1,
        half_width: 1.5,
        interior_degree: k,
        trace_degree: kt,
        quad_points: None,
    })
    .unwrap()
}

fn bump_nodes(b: &GalerkinBasis, h: f64) -> Vec<C64> {
    let g = GridSpec::new(3, 1, 32, 3.0).unwrap();
    sample_potential(b, &bump_potential(&g, h, 1.2, &[0.1, 0.0, -0.1])).unwrap()
}

fn c9_dn_map() -> Outcome {
    let b = basis(6, 3);
    let dn = assemble_dn_map(&b, &assemble_form(&b, &bump_nodes(&b, 3.0)).unwrap()).unwrap();
    let zero = |b: &GalerkinBasis| vec![C64::default(); b.nodes.len().pow(3)];
    let coarse = assemble_dn_map(&b, &assemble_form(&b, &zero(&b)).unwrap()).unwrap();
    let bf = basis(12, 3);
    let fine = assemble_dn_map(&bf, &assemble_form(&bf, &zero(&bf)).unwrap()).unwrap();
    let scale = fine.matrix.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let refine = (&coarse.matrix - &fine.matrix)
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max)
        / scale;
    let pass = dn.extension_residual <= 1e-9
        && coarse.extension_residual <= 1e-9
        && dn.symmetry_residual <= 1e-8
        && refine <= 0.01
        && coarse.size() <= 128;
    outcome(
        pass,
        format!(
            "traces {}; extension {:.1e}; symmetry {:.1e}; refinement K=6 vs 12 {:.2e} (<= 1e-2)",
            coarse.size(),
            dn.extension_residual.max(coarse.extension_residual),
            dn.symmetry_residual,
            refine
        ),
    )
}

fn c10_identity() -> Outcome {
    let b = basis(6, 4);
    let q1 = bump_nodes(&b, 2.0);
    let q2: Vec<C64> = q1
        .iter()
        .zip(bump_nodes(&b, 1.0))
        .map(|(a, c)| a + c * C64::new(0.5, 0.5))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let nt = b.n_trace();
    let mut trace = || -> Vec<C64> {
        (0..nt)
            .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    };
    let (t1, t2) = (trace(), trace());
    let f1 = assemble_form(&b, &q1).unwrap();
    let f2 = assemble_form(&b, &q2).unwrap();
    let d1 = assemble_dn_map(&b, &f1).unwrap();
    let d2 = assemble_dn_map(&b, &f2).unwrap();
    let u1 = solve_dirichlet(&f1, &t1).unwrap();

    let u2_same = solve_dirichlet(&f1.conjugate_potential(), &t2).unwrap();
    let same = integral_identity_check(&f1, &f1, &u1, &u2_same, &d1, &d1).unwrap();
    let u2 = solve_dirichlet(&f2.conjugate_potential(), &t2).unwrap();
    let good = integral_identity_check(&f1, &f2, &u1, &u2, &d1, &d2).unwrap();
    let mut bad_u2 = u2.clone();
    for v in bad_u2.iter_mut().take(b.n_interior) {
        *v += C64::new(0.1 * (rng.gen::<f64>() - 0.5), 0.0);
    }
    let bad = integral_identity_check(&f1, &f2, &u1, &bad_u2, &d1, &d2).unwrap();
    let same_ok = same.residual <= 1e-9;
    let margin = bad.relative / good.relative.max(f64::MIN_POSITIVE);
    let control_ok = margin >= 1e3 && good.relative <= 1e-6;
    outcome(
        same_ok && control_ok,
        format!(
            "q1=q2 residual {:.1e}; q2=q1+bump relative {:.1e}; negative control {:.1e} ({:.0e}x)",
            same.residual, good.relative, bad.relative, margin
        ),
    )
}

fn c11_reconstruction() -> Outcome {
    let g = GridSpec::new(3, 1, 32, 4.0).unwrap();
    let q = Potential::new(bump_potential(&g, 2.0, 1.5, &[0.2, -0.1, 0.0])).unwrap();
    let truth = low_pass(&q.q, 4.0).unwrap();
    let t = Instant::now();
    let res = reconstruct(
        &Source::Oracle { q: &q, q0: None },
        &g,
        &ReconstructConfig::default(),
    )
    .unwrap();
    let errs: Vec<f64> = res
        .stages
        .iter()
        .map(|s| relative_l2_error(&s.field, &truth).unwrap())
        .collect();
    let last = *errs.last().unwrap();
    let monotone = errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        last <= 0.2 && monotone && secs <= 1800.0,
        format!(
            "{} frequencies, low-pass error along s={{8,16,32}}: [{}] (final <= 0.2, monotone {}), {secs:.0}s",
            res.last().samples.len(),
            fmt_list(&errs),
            ok(monotone)
        ),
    )
}

fn c12_carleman() -> Outcome {
    let g = GridSpec::new(3, 1, 64, 4.0).unwrap();
    let t = Instant::now();
    let u = radial_bump(&g, &[0.0; 3], 1.0);
    let lin = probe_linear(3, 1, &axis_k_list(3, &[1.0, 2.0, 4.0, 8.0, 16.0]), &[u]).unwrap();
    let spread = lin.spread.iter().cloned().fold(0.0, f64::max);
    let a = annular_bump(&g, 1.0, 2.0);
    let bad = CarlemanConfig::new(3, 1, Weight::Log { t: 0.5 + 1e-6 }).unwrap();
    let good = CarlemanConfig::new(3, 1, Weight::Log { t: 1.0 }).unwrap();
    let flagged = probe_log(&bad, std::slice::from_ref(&a))
        .unwrap()
        .delta_flagged;
    let clean = !probe_log(&good, &[a]).unwrap().delta_flagged;
    let secs = t.elapsed().as_secs_f64();
    outcome(
        spread <= 3.0 && flagged && clean && secs <= 300.0,
        format!("linear spread {spread:.2} (<= 3); delta=1e-6 flagged {flagged}, delta=0.5 unflagged {clean}; {secs:.0}s"),
    )
}

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let want = |k: usize| args.is_empty() || args.contains(&k);
    let fam = if want(3) || want(4) {
        Some(families())
    } else {
        None
    };
    let names = [
        "fundamental solution",
        "chart kernel identity",
        "weighted decay",
        "Lp uniformity",
        "Jacobian bounds",
        "partition invariants",
        "CGO solutions",
        "operator-norm decay",
        "DN map",
        "integral identity",
        "end-to-end reconstruction",
        "Carleman probes",
    ];
    let mut failed = Vec::new();
    for k in 1..=12 {
        if !want(k) {
            continue;
        }
        let t = Instant::now();
        let o = match k {
            1 => c1_fundamental(),
            2 => c2_chart_kernel(),
            3 => c3_decay(fam.as_ref().unwrap()),
            4 => c4_lp(fam.as_ref().unwrap()),
            5 => c5_jacobian(),
            6 => c6_partition(),
            7 => c7_cgo(),
            8 => c8_operator_norm(),
            9 => c9_dn_map(),
            10 => c10_identity(),
            11 => c11_reconstruction(),
            _ => c12_carleman(),
        };
        println!(
            "criterion {k:>2} {} {}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            names[k - 1],
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(k);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
