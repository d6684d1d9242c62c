use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use polycgo::carleman::{
    annular_bump, axis_k_list, localized_random, probe_linear, probe_log, radial_bump,
    CarlemanConfig, CarlemanRow, Weight,
};
use polycgo::cgo::{build_cgo, bump_potential, Potential};
use polycgo::forward::{
    assemble_dn_map, assemble_form, check_assumption_a, sample_potential, ForwardConfig,
    GalerkinBasis,
};
use polycgo::green::{
    canonical_zeta, probe_lp_bound, probe_weighted_decay, s_family, verify_fundamental,
};
use polycgo::io::{read_dn_map, read_field, write_dn_map, write_field};
use polycgo::recon::{low_pass, reconstruct, relative_l2_error, ReconstructConfig, Source};
use polycgo::{assemble, Backend, ComplexField, GridSpec, C64};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{PotentialKind, ReconMode, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Dependency(String),
    #[error(transparent)]
    Library(#[from] polycgo::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration and usage problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use polycgo::Error as E;
        match self {
            CliError::Usage(_) | CliError::Dependency(_) => 2,
            CliError::Library(
                E::InvalidGrid(_)
                | E::InvalidExponent(_)
                | E::DimensionOrder { .. }
                | E::InvalidSigma { .. }
                | E::NotLocallyIntegrable { .. }
                | E::Unsupported(_)
                | E::Dependency(_),
            ) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// JSON summary echoed on stdout.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub seed: u64,
    pub passed: bool,
    /// Names of the asserted invariants that failed.
    pub failed: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub details: Value,
}

impl Summary {
    fn new(
        command: &'static str,
        cfg: &RunConfig,
        failed: Vec<String>,
        outputs: Vec<PathBuf>,
        details: Value,
    ) -> Self {
        Self {
            command,
            seed: cfg.seed,
            passed: failed.is_empty(),
            failed,
            outputs,
            details,
        }
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let d = cfg.output.directory.clone();
    fs::create_dir_all(&d)?;
    Ok(d)
}

fn grid(cfg: &RunConfig) -> CliResult<GridSpec> {
    Ok(GridSpec::new(
        cfg.problem.n,
        cfg.problem.m,
        cfg.grid.points_per_axis,
        cfg.grid.half_width,
    )?)
}

fn potential_field(cfg: &RunConfig, grid: &GridSpec) -> CliResult<ComplexField> {
    let p = &cfg.potential;
    match p.kind {
        PotentialKind::Zero => Ok(ComplexField::zeros(grid)),
        PotentialKind::Bump => {
            let center = p.center.clone().unwrap_or_else(|| vec![0.0; grid.n]);
            let mut f = bump_potential(grid, p.height, p.radius, &center);
            let phase = C64::from_polar(1.0, p.phase);
            f.data.iter_mut().for_each(|v| *v *= phase);
            Ok(f)
        }
        PotentialKind::File => {
            let path = p.path.as_ref().ok_or_else(|| {
                CliError::Usage("potential.kind = \"file\" needs potential.path".into())
            })?;
            let (f, _) = read_field(path)?;
            if f.grid != *grid {
                return Err(CliError::Usage(format!(
                    "{} is not on the configured grid",
                    path.display()
                )));
            }
            Ok(f)
        }
    }
}

fn gaussian(grid: &GridSpec) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        (-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp()
    })
}

pub fn green_verify(cfg: &RunConfig) -> CliResult<Summary> {
    let (n, m) = (cfg.problem.n, cfg.problem.m);
    let grid = grid(cfg)?;
    let dir = out_dir(cfg)?;
    let gcfg = cfg.green.to_config();
    let f = gaussian(&grid);
    let family = s_family(&grid, m, &cfg.zeta.s, &gcfg)?;
    let tol = match gcfg.backend {
        Backend::Naive => 1e-6,
        Backend::Paper => 1e-2,
    };
    let mut failed = Vec::new();
    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for g in &family {
        let res = verify_fundamental(g, &f)?;
        if res > tol {
            failed.push(format!("green.fundamental_residual(s={})", g.zeta.s));
        }
        residuals.push(json!({"s": g.zeta.s, "residual": res}));
        rows.push(vec![
            g.zeta.s.to_string(),
            format!("{res:e}"),
            tol.to_string(),
        ]);
    }
    let mut outputs = vec![dir.join("residual.csv")];
    write_csv(&outputs[0], &["s", "residual", "tolerance"], &rows)?;

    let mut details = json!({"backend": gcfg.backend, "tolerance": tol, "residuals": residuals});
    if family.len() >= 2 {
        let sigma = cfg.green.sigma.unwrap_or(0.5 - m as f64);
        let decay = probe_weighted_decay(&family, &f, sigma)?;
        if !decay.passed {
            failed.push("green.weighted_decay_slope".into());
        }
        let rows: Vec<Vec<String>> = decay
            .rows
            .iter()
            .map(|(s, v)| vec![s.to_string(), format!("{v:e}")])
            .collect();
        let path = dir.join("decay.csv");
        write_csv(&path, &["s", "weighted_norm"], &rows)?;
        outputs.push(path);
        details["decay"] = json!({"sigma": sigma, "slope": decay.slope, "passed": decay.passed});
    }
    if n > 2 * m {
        // Reported, not asserted.
        let lp = probe_lp_bound(&family, &f)?;
        let rows: Vec<Vec<String>> = lp
            .rows
            .iter()
            .map(|(s, v)| vec![s.to_string(), format!("{v:e}")])
            .collect();
        let path = dir.join("lp.csv");
        write_csv(&path, &["s", "ratio"], &rows)?;
        outputs.push(path);
        details["lp"] =
            json!({"p_in": lp.p_in, "p_out": lp.p_out, "max_over_min": lp.max_over_min});
    }
    let summary = Summary::new("green-verify", cfg, failed, outputs, details);
    write_summary(&dir, &summary)?;
    Ok(summary)
}

fn write_summary(dir: &Path, summary: &Summary) -> CliResult<()> {
    fs::write(
        dir.join(format!("{}.json", summary.command)),
        serde_json::to_string_pretty(summary).unwrap(),
    )?;
    Ok(())
}

fn s_tag(s: f64) -> String {
    format!("{s}").replace('.', "p")
}

pub fn cgo_build(cfg: &RunConfig) -> CliResult<Summary> {
    cfg.require_order().map_err(CliError::Usage)?;
    let grid = grid(cfg)?;
    let dir = out_dir(cfg)?;
    let q = Potential::new(potential_field(cfg, &grid)?)?;
    let gcfg = cfg.green.to_config();
    let ccfg = cfg.cgo.to_config();
    let mut failed = Vec::new();
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut diags = Vec::new();
    for &s in &cfg.zeta.s {
        let g = assemble(&canonical_zeta(grid.n, s)?, grid.m, &grid, &gcfg)?;
        let sol = build_cgo(&q, &g, &ccfg)?;
        let d = sol.diagnostics();
        if !d.converged {
            failed.push(format!("cgo.converged(s={s})"));
        }
        let path = dir.join(format!("cgo_r_s{}.json", s_tag(s)));
        let meta = json!({"field": "r", "u": "exp(i zeta.x) (1 + r)", "green": g.metadata(), "diagnostics": d});
        write_field(&path, &sol.r, Some(meta))?;
        outputs.push(path);
        rows.push(vec![
            s.to_string(),
            d.iterations.to_string(),
            d.converged.to_string(),
            format!("{:e}", d.contraction),
            format!("{:e}", d.fixed_point_residual),
            format!("{:e}", d.equation_residual),
            format!("{:e}", d.r_norm_q),
            format!("{:e}", d.r_norm_k),
            d.below_s_min.to_string(),
        ]);
        diags.push(d);
    }
    let path = dir.join("cgo.csv");
    write_csv(
        &path,
        &[
            "s",
            "iterations",
            "converged",
            "contraction",
            "fixed_point_residual",
            "equation_residual",
            "r_norm_q",
            "r_norm_k",
            "below_s_min",
        ],
        &rows,
    )?;
    outputs.push(path);
    let summary = Summary::new(
        "cgo-build",
        cfg,
        failed,
        outputs,
        json!({"solutions": diags}),
    );
    write_summary(&dir, &summary)?;
    Ok(summary)
}

fn forward_config(cfg: &RunConfig) -> ForwardConfig {
    ForwardConfig {
        n: cfg.problem.n,
        m: cfg.problem.m,
        half_width: cfg.forward.half_width,
        interior_degree: cfg.forward.interior_degree,
        trace_degree: cfg.forward.trace_degree,
        quad_points: cfg.forward.quad_points,
    }
}

pub fn dn_sim(cfg: &RunConfig, name: &str) -> CliResult<Summary> {
    let dir = out_dir(cfg)?;
    let basis = GalerkinBasis::new(&forward_config(cfg))?;
    let nodes = match cfg.potential.kind {
        PotentialKind::Zero => vec![C64::default(); basis.nodes.len().pow(cfg.problem.n as u32)],
        _ => sample_potential(&basis, &potential_field(cfg, &grid(cfg)?)?)?,
    };
    let forms = assemble_form(&basis, &nodes)?;
    let assumption = check_assumption_a(&forms);
    let dn = assemble_dn_map(&basis, &forms)?;
    let path = dir.join(name);
    let meta = json!({"potential": cfg.potential, "seed": cfg.seed});
    write_dn_map(&path, &dn, Some(meta))?;
    let details = json!({
        "traces": dn.size(),
        "interior": forms.n_interior,
        "extension_residual": dn.extension_residual,
        "symmetry_residual": dn.symmetry_residual,
        "assumption_a": assumption,
    });
    let summary = Summary::new("dn-sim", cfg, Vec::new(), vec![path], details);
    write_summary(&dir, &summary)?;
    Ok(summary)
}

fn dn_path(p: &Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
    let hint = "run `polycgo dn-sim` for the potential and for the background (potential.kind = \"zero\"), \
                then set reconstruct.dn and reconstruct.dn0";
    match p {
        None => Err(CliError::Dependency(format!(
            "boundary reconstruction needs reconstruct.{key}; {hint}"
        ))),
        Some(p) if !p.exists() => Err(CliError::Dependency(format!(
            "{} (reconstruct.{key}) not found; {hint}",
            p.display()
        ))),
        Some(p) => Ok(p.clone()),
    }
}

pub fn run_reconstruct(cfg: &RunConfig) -> CliResult<Summary> {
    cfg.require_order().map_err(CliError::Usage)?;
    let grid = grid(cfg)?;
    let dir = out_dir(cfg)?;
    let r = &cfg.reconstruct;
    let rcfg = ReconstructConfig {
        xi_radius: r.xi_radius,
        s_schedule: r.s_schedule.clone(),
        scale_with_xi: r.scale_with_xi,
        conjugate_symmetric: r.conjugate_symmetric,
        m: cfg.problem.m,
        green: cfg.green.to_config(),
        cgo: cfg.cgo.to_config(),
    };
    let t = Instant::now();
    let (result, truth) = match r.mode {
        ReconMode::Oracle => {
            let q = Potential::new(potential_field(cfg, &grid)?)?;
            let truth = low_pass(&q.q, r.xi_radius)?;
            (
                reconstruct(&Source::Oracle { q: &q, q0: None }, &grid, &rcfg)?,
                Some(truth),
            )
        }
        ReconMode::Boundary => {
            let (dn, _) = read_dn_map(&dn_path(&r.dn, "dn")?)?;
            let (dn0, _) = read_dn_map(&dn_path(&r.dn0, "dn0")?)?;
            if dn.n != cfg.problem.n || dn.m != cfg.problem.m {
                return Err(CliError::Usage(format!(
                    "DN map is for n = {}, m = {}, config has n = {}, m = {}",
                    dn.n, dn.m, cfg.problem.n, cfg.problem.m
                )));
            }
            let basis = GalerkinBasis::new(&ForwardConfig {
                n: dn.n,
                m: dn.m,
                half_width: dn.half_width,
                interior_degree: dn.interior_degree,
                trace_degree: dn.trace_degree,
                quad_points: Some(dn.quad_points),
            })?;
            let source = Source::Boundary {
                basis: &basis,
                dn: &dn,
                dn0: &dn0,
                cgo_potential: None,
            };
            (reconstruct(&source, &grid, &rcfg)?, None)
        }
    };
    let seconds = t.elapsed().as_secs_f64();

    let mut failed = Vec::new();
    let mut outputs = Vec::new();
    let mut rows = Vec::new();
    let mut stages = Vec::new();
    for stage in &result.stages {
        let error = truth
            .as_ref()
            .map(|t| relative_l2_error(&stage.field, t))
            .transpose()?;
        let mut unconverged = 0;
        for x in &stage.samples {
            let e = &x.extraction;
            let ok = [&e.cgo1, &e.cgo2]
                .iter()
                .all(|d| d.as_ref().is_none_or(|d| d.converged));
            if !ok {
                unconverged += 1;
            }
            let xi_norm = e.xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            let opt = |v: Option<C64>| v.map(|c| format!("{:e}", c.norm())).unwrap_or_default();
            rows.push(vec![
                stage.s_base.to_string(),
                format!("{:?}", x.k),
                xi_norm.to_string(),
                e.s.to_string(),
                format!("{:e}", e.born.re),
                format!("{:e}", e.born.im),
                opt(e.correction),
                opt(e.exact),
            ]);
        }
        if unconverged > 0 {
            failed.push(format!(
                "reconstruct.cgo_converged(s_base={})",
                stage.s_base
            ));
        }
        let path = dir.join(format!("recon_s{}.json", s_tag(stage.s_base)));
        write_field(
            &path,
            &stage.field,
            Some(json!({"s_base": stage.s_base, "xi_radius": r.xi_radius})),
        )?;
        outputs.push(path);
        stages.push(json!({
            "s_base": stage.s_base,
            "samples": stage.samples.len(),
            "missing": stage.missing,
            "unconverged": unconverged,
            "low_pass_error": error,
        }));
    }
    let path = dir.join("recon.json");
    write_field(
        &path,
        &result.last().field,
        Some(json!({"s_base": result.last().s_base, "mode": r.mode})),
    )?;
    outputs.push(path);
    let path = dir.join("correction.csv");
    write_csv(
        &path,
        &[
            "s_base",
            "k",
            "xi_norm",
            "s",
            "born_re",
            "born_im",
            "correction_abs",
            "exact_abs",
        ],
        &rows,
    )?;
    outputs.push(path);
    let details = json!({"mode": r.mode, "seconds": seconds, "stages": stages});
    let path = dir.join("recon_diagnostics.json");
    fs::write(&path, serde_json::to_string_pretty(&details).unwrap())?;
    outputs.push(path);
    let summary = Summary::new("reconstruct", cfg, failed, outputs, details);
    write_summary(&dir, &summary)?;
    Ok(summary)
}

fn carleman_row(r: &CarlemanRow) -> Vec<String> {
    vec![
        r.weight_type.clone(),
        r.parameter.to_string(),
        r.sample_id.to_string(),
        format!("{:e}", r.ratio),
    ]
}

pub fn carleman_probe(cfg: &RunConfig) -> CliResult<Summary> {
    cfg.require_order().map_err(CliError::Usage)?;
    let grid = grid(cfg)?;
    let dir = out_dir(cfg)?;
    let (n, m) = (grid.n, grid.m);
    let l = grid.half_width;
    let c = &cfg.carleman;
    let mut samples = vec![radial_bump(&grid, &vec![0.0; n], l / 4.0)];
    for i in 0..c.random_samples {
        samples.push(localized_random(
            &grid,
            l / 4.0,
            6,
            cfg.seed.wrapping_add(i as u64),
        ));
    }
    let linear = probe_linear(n, m, &axis_k_list(n, &c.k_magnitudes), &samples)?;
    let mut failed = Vec::new();
    for (i, s) in linear.spread.iter().enumerate() {
        if !(*s <= c.max_spread) {
            failed.push(format!("carleman.linear_spread(sample={i})"));
        }
    }
    let mut rows: Vec<Vec<String>> = linear.rows.iter().map(carleman_row).collect();
    let annulus = annular_bump(&grid, l / 4.0, l / 2.0);
    let mut logs = Vec::new();
    for &t in &c.log_t {
        let rep = probe_log(
            &CarlemanConfig::new(n, m, Weight::Log { t })?,
            std::slice::from_ref(&annulus),
        )?;
        rows.extend(rep.rows.iter().map(carleman_row));
        logs.push(json!({"t": t, "delta": rep.delta, "constant": rep.constant, "delta_flagged": rep.delta_flagged}));
    }
    let path = dir.join("carleman.csv");
    write_csv(
        &path,
        &["weight-type", "parameter", "sample-id", "ratio"],
        &rows,
    )?;
    let details = json!({
        "linear": {"constant": linear.constant, "spread": linear.spread, "skipped": linear.skipped},
        "log": logs,
    });
    let summary = Summary::new("carleman-probe", cfg, failed, vec![path], details);
    write_summary(&dir, &summary)?;
    Ok(summary)
}
