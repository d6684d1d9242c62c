//! Run configuration: one TOML file, optionally patched by `--set key=value`.

use std::path::{Path, PathBuf};

use polycgo::cgo::CgoConfig;
use polycgo::recon::ReconstructConfig;
use polycgo::{Backend, GreenConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub problem: Problem,
    pub grid: Grid,
    pub zeta: Zeta,
    pub green: Green,
    pub potential: PotentialSpec,
    pub cgo: Cgo,
    pub forward: Forward,
    pub reconstruct: Reconstruct,
    pub carleman: Carleman,
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Problem {
    pub n: usize,
    pub m: usize,
}

impl Default for Problem {
    fn default() -> Self {
        Self { n: 3, m: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub points_per_axis: usize,
    pub half_width: f64,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            points_per_axis: 32,
            half_width: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Zeta {
    pub s: Vec<f64>,
}

impl Default for Zeta {
    fn default() -> Self {
        Self {
            s: vec![4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Green {
    pub backend: Backend,
    pub interp_order: usize,
    pub eta_refine: f64,
    /// Needed to run the naive backend with `m >= 2`.
    pub allow_unsafe: bool,
    /// Weight exponent of the decay probe; defaults to `1/2 - m`.
    pub sigma: Option<f64>,
}

impl Default for Green {
    fn default() -> Self {
        let g = GreenConfig::default();
        Self {
            backend: g.backend,
            interp_order: g.interp_order,
            eta_refine: g.eta_refine,
            allow_unsafe: false,
            sigma: None,
        }
    }
}

impl Green {
    pub fn to_config(&self) -> GreenConfig {
        GreenConfig {
            backend: self.backend,
            allow_unsafe: self.allow_unsafe,
            interp_order: self.interp_order,
            eta_refine: self.eta_refine,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Zero,
    Bump,
    File,
}

/// Potential used by `cgo-build`, `dn-sim` and oracle reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Bump `height * e^{i phase} * e * exp(-1/(1 - |x - c|^2/radius^2))`.
    pub height: f64,
    pub phase: f64,
    pub radius: f64,
    pub center: Option<Vec<f64>>,
    /// Field header for `kind = "file"`.
    pub path: Option<PathBuf>,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            kind: PotentialKind::Bump,
            height: 2.0,
            phase: 0.0,
            radius: 1.5,
            center: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Cgo {
    pub tol: f64,
    pub max_iter: usize,
    pub s_min: f64,
    /// Half-width of the box `K` where the remainder is measured.
    pub k_half_width: Option<f64>,
}

impl Default for Cgo {
    fn default() -> Self {
        let c = CgoConfig::default();
        Self {
            tol: c.tol,
            max_iter: c.max_iter,
            s_min: c.s_min,
            k_half_width: c.k_half_width,
        }
    }
}

impl Cgo {
    pub fn to_config(&self) -> CgoConfig {
        CgoConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            s_min: self.s_min,
            k_half_width: self.k_half_width,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Forward {
    pub half_width: f64,
    pub interior_degree: usize,
    pub trace_degree: usize,
    pub quad_points: Option<usize>,
}

impl Default for Forward {
    fn default() -> Self {
        Self {
            half_width: 1.5,
            interior_degree: 8,
            trace_degree: 4,
            quad_points: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMode {
    Oracle,
    Boundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reconstruct {
    pub mode: ReconMode,
    pub xi_radius: f64,
    pub s_schedule: Vec<f64>,
    pub scale_with_xi: bool,
    pub conjugate_symmetric: bool,
    /// DN map of the unknown potential (boundary mode).
    pub dn: Option<PathBuf>,
    /// DN map of the background, usually `q = 0` (boundary mode).
    pub dn0: Option<PathBuf>,
}

impl Default for Reconstruct {
    fn default() -> Self {
        let r = ReconstructConfig::default();
        Self {
            mode: ReconMode::Oracle,
            xi_radius: r.xi_radius,
            s_schedule: r.s_schedule,
            scale_with_xi: r.scale_with_xi,
            conjugate_symmetric: r.conjugate_symmetric,
            dn: None,
            dn0: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Carleman {
    /// `|k|` values of the linear-weight sweep (along each axis).
    pub k_magnitudes: Vec<f64>,
    /// Exponents `t` of the `|x|^{-t}` weight.
    pub log_t: Vec<f64>,
    /// Extra seeded random samples besides the radial bump.
    pub random_samples: usize,
    /// Upper bound asserted on the per-sample max/min ratio across `k`.
    pub max_spread: f64,
}

impl Default for Carleman {
    fn default() -> Self {
        Self {
            k_magnitudes: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            log_t: vec![0.75, 1.0],
            random_samples: 2,
            max_spread: 3.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub directory: PathBuf,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

/// Parses `text` as a TOML value, falling back to a bare string.
fn parse_value(text: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {text}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| format!("--set expects key=value, got {assignment:?}"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().unwrap();
    let mut node = table;
    for p in path {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("--set {key}: {p} is not a table"))?;
    }
    node.insert(last.to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, String> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let positive = [
            ("grid.half_width", self.grid.half_width),
            ("cgo.tol", self.cgo.tol),
            ("cgo.s_min", self.cgo.s_min),
            ("forward.half_width", self.forward.half_width),
            ("reconstruct.xi_radius", self.reconstruct.xi_radius),
            ("green.eta_refine", self.green.eta_refine),
            ("potential.radius", self.potential.radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        let lists = [
            ("zeta.s", &self.zeta.s),
            ("reconstruct.s_schedule", &self.reconstruct.s_schedule),
        ];
        for (name, list) in lists {
            if list.is_empty() || list.iter().any(|v| !(*v > 0.0)) {
                return Err(format!(
                    "{name} must be a non-empty list of positive values"
                ));
            }
        }
        if let Some(c) = &self.potential.center {
            if c.len() != self.problem.n {
                return Err(format!(
                    "potential.center has {} entries, problem.n = {}",
                    c.len(),
                    self.problem.n
                ));
            }
        }
        Ok(())
    }

    /// `n > 2m`, required by the CGO and reconstruction pipelines.
    pub fn require_order(&self) -> Result<(), String> {
        let Problem { n, m } = self.problem;
        if n <= 2 * m {
            return Err(format!("this command needs n > 2m, got n = {n}, m = {m}"));
        }
        Ok(())
    }
}
