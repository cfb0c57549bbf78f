//! Command-line front end: TOML run configurations, experiment dispatch and
//! CSV/JSON outputs.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical
//! non-convergence, 4 unknown command, 5 a bound check reported FAIL,
//! 1 anything else (I/O).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conditioning::{condition_bounds, distance_to_sigma, restricted_condition, GridOptions};
use crate::error::Error;
use crate::experiments::{
    check_thm1, check_thm5, check_thm6, estimate_expected_roots, kostlan_covariance, nu_lin_curve, nu_sparse_curve,
    BoundRow, ComparisonReport, TrialReport,
};
use crate::kahler::{momentum, DiagonalCovariance};
use crate::quadrature::QuadOptions;
use crate::randsys::{derive_seed, sample, Ensemble, Field, Region, RegionBox};
use crate::rootfind::{all_roots, real_roots_in, Orthants};
use crate::supports::Support;
use crate::volume::{compare_mixed_volume, expected_roots, momentum_pushforward_volume, real_roots_bound};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUT_ENV: &str = "SPARSECOND_OUT";

pub const COMMANDS: &[&str] = &[
    "mixed-volume",
    "expect-roots",
    "condition",
    "nu-lin",
    "nu-sparse",
    "check-thm1",
    "check-thm3",
    "check-thm5",
    "check-thm6",
    "momentum-check",
];

#[derive(Debug, Parser)]
#[command(name = "sparsecond", version, about = "Condition numbers and root statistics of random sparse polynomial systems")]
pub struct Args {
    /// Command to run; overrides `command` in the config file.
    pub command: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory (also settable through SPARSECOND_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<f64>>,
    /// Kostlan degree; the support and weights are generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kostlan: Option<u32>,
    /// Dimension for Kostlan entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub p: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        let d = QuadOptions::default();
        Self {
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_panels: d.max_panels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub spacing: f64,
    pub q_steps: usize,
    pub p_bound: f64,
    pub refine: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        let d = GridOptions::default();
        Self {
            spacing: d.spacing,
            q_steps: d.q_steps,
            p_bound: d.p_bound,
            refine: d.refine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthantSpec {
    #[default]
    Positive,
    All,
}

/// A fully resolved run configuration; embedded verbatim in every JSON
/// summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: String,
    #[serde(default = "default_field")]
    pub field: Field,
    #[serde(default)]
    pub ensemble: Vec<EnsembleSpec>,
    /// Union of boxes; an empty list means the whole torus.
    #[serde(default)]
    pub region: Vec<RegionSpec>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Dimension of linear experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub orthants: OrthantSpec,
    /// Also run the grid sweep over non-root fibers in `nu-sparse`.
    #[serde(default)]
    pub sweep: bool,
    /// Boxes in momentum space for `momentum-check`.
    #[serde(default)]
    pub momentum_boxes: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub quadrature: QuadSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_field() -> Field {
    Field::Complex
}
fn default_trials() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config")
    }
}

/// Failure of a run, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    UnknownCommand(String),
    CheckFailed(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Validation(_) => 2,
            Self::Numerical(_) => 3,
            Self::UnknownCommand(_) => 4,
            Self::CheckFailed(_) => 5,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid configuration: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::UnknownCommand(c) => write!(f, "unknown command `{c}` (expected one of: {})", COMMANDS.join(", ")),
            Self::CheckFailed(m) => write!(f, "check failed: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn lib_error(path: &str, e: Error) -> CliError {
    match e {
        Error::NonConvergence { .. } | Error::Degenerate(_) => CliError::Numerical(format!("{path}: {e}")),
        _ => CliError::Validation(format!("{path}: {e}")),
    }
}

fn invalid(path: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {msg}", path.into()))
}

impl RunConfig {
    pub fn quad_options(&self) -> QuadOptions {
        QuadOptions {
            rel_tol: self.quadrature.rel_tol,
            abs_tol: self.quadrature.abs_tol,
            max_panels: self.quadrature.max_panels,
            ..QuadOptions::default()
        }
    }

    pub fn grid_options(&self) -> GridOptions {
        GridOptions {
            spacing: self.grid.spacing,
            q_steps: self.grid.q_steps,
            p_bound: self.grid.p_bound,
            refine: self.grid.refine,
            ..GridOptions::default()
        }
    }

    pub fn validate_scalars(&self) -> Result<(), CliError> {
        for (i, e) in self.eps.iter().enumerate() {
            if !(*e > 0.0) || !e.is_finite() {
                return Err(invalid(format!("eps[{i}]"), "must be positive and finite"));
            }
        }
        let q = &self.quadrature;
        if !(q.rel_tol >= 0.0) || !(q.abs_tol >= 0.0) || q.rel_tol + q.abs_tol <= 0.0 {
            return Err(invalid("quadrature", "tolerances must be nonnegative and not both zero"));
        }
        if q.max_panels == 0 {
            return Err(invalid("quadrature.max_panels", "must be positive"));
        }
        let g = &self.grid;
        if !(g.spacing > 0.0) || !(g.p_bound > 0.0) || g.q_steps == 0 {
            return Err(invalid("grid", "spacing, p_bound and q_steps must be positive"));
        }
        Ok(())
    }

    /// Build the ensemble described by `[[ensemble]]`.
    pub fn build_ensemble(&self) -> Result<Ensemble, CliError> {
        if self.ensemble.is_empty() {
            return Err(invalid("ensemble", "at least one entry is required"));
        }
        let mut items = Vec::with_capacity(self.ensemble.len());
        for (i, spec) in self.ensemble.iter().enumerate() {
            items.push(build_item(i, spec)?);
        }
        if items.len() == 1 && items[0].0.dim() > 1 {
            // one entry stands for the unmixed system
            let (a, c) = items.pop().expect("one item");
            return Ensemble::unmixed(a, c, self.field).map_err(|e| lib_error("ensemble[0]", e));
        }
        Ensemble::new(items, self.field).map_err(|e| lib_error("ensemble", e))
    }

    pub fn build_region(&self, n: usize) -> Result<Region, CliError> {
        if self.region.is_empty() {
            return Ok(Region::full(n));
        }
        let mut boxes = Vec::with_capacity(self.region.len());
        for (i, r) in self.region.iter().enumerate() {
            if r.p.len() != n {
                return Err(invalid(format!("region[{i}].p"), format!("expected {n} intervals, found {}", r.p.len())));
            }
            let p: Vec<(f64, f64)> = r.p.iter().map(|[a, b]| (*a, *b)).collect();
            let b = match &r.q {
                None => RegionBox::p_box(p),
                Some(q) => {
                    if q.len() != n {
                        return Err(invalid(format!("region[{i}].q"), format!("expected {n} intervals, found {}", q.len())));
                    }
                    RegionBox {
                        p,
                        q: q.iter().map(|[a, b]| (*a, *b)).collect(),
                    }
                }
            };
            boxes.push(b);
        }
        Region::new(n, boxes).map_err(|e| lib_error("region", e))
    }
}

fn build_item(i: usize, spec: &EnsembleSpec) -> Result<(Support, DiagonalCovariance), CliError> {
    let path = format!("ensemble[{i}]");
    if let Some(d) = spec.kostlan {
        if spec.support.is_some() || spec.covariance.is_some() {
            return Err(invalid(&path, "`kostlan` excludes `support` and `covariance`"));
        }
        let n = spec.dim.ok_or_else(|| invalid(format!("{path}.dim"), "required with `kostlan`"))?;
        return kostlan_covariance(d, n).map_err(|e| lib_error(&path, e));
    }
    let rows = spec
        .support
        .clone()
        .ok_or_else(|| invalid(format!("{path}.support"), "missing"))?;
    let support = Support::new(rows).map_err(|e| lib_error(&format!("{path}.support"), e))?;
    if let Some(n) = spec.dim {
        if n != support.dim() {
            return Err(invalid(format!("{path}.dim"), format!("support has dimension {}", support.dim())));
        }
    }
    let cov = match &spec.covariance {
        None => DiagonalCovariance::identity(support.len()),
        Some(w) => {
            if w.len() != support.len() {
                return Err(invalid(
                    format!("{path}.covariance"),
                    format!("expected {} entries, found {}", support.len(), w.len()),
                ));
            }
            if let Some(j) = w.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(invalid(format!("{path}.covariance[{j}]"), "must be positive and finite"));
            }
            DiagonalCovariance::new(w.clone()).map_err(|e| lib_error(&format!("{path}.covariance"), e))?
        }
    };
    Ok((support, cov))
}

/// Output of one command: CSV header and rows plus a JSON result object.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub result: Value,
    /// Set when a bound check failed.
    pub failure: Option<String>,
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn report_cells(r: &TrialReport) -> Vec<String> {
    vec![
        num(r.estimate),
        num(r.stderr),
        num(r.ci_low),
        num(r.ci_high),
        r.trials.to_string(),
        r.discarded_degenerate.to_string(),
    ]
}

const REPORT_COLUMNS: [&str; 6] = ["estimate", "stderr", "ci_low", "ci_high", "trials", "discarded_degenerate"];

fn require_eps(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.eps.is_empty() {
        return Err(invalid("eps", "at least one value is required"));
    }
    Ok(())
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable result")
}

/// Run `cfg.command` and collect its outputs (nothing is written).
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate_scalars()?;
    match cfg.command.as_str() {
        "mixed-volume" => mixed_volume_cmd(cfg),
        "expect-roots" => expect_roots_cmd(cfg),
        "condition" => condition_cmd(cfg),
        "nu-lin" => nu_lin_cmd(cfg),
        "nu-sparse" => nu_sparse_cmd(cfg),
        "check-thm1" => thm1_cmd(cfg),
        "check-thm3" => thm3_cmd(cfg),
        "check-thm5" => thm5_cmd(cfg),
        "check-thm6" => thm6_cmd(cfg),
        "momentum-check" => momentum_cmd(cfg),
        "" => Err(invalid("command", "missing (give it on the command line or in the config)")),
        other => Err(CliError::UnknownCommand(other.to_string())),
    }
}

fn mixed_volume_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ens = cfg.build_ensemble()?;
    let c = compare_mixed_volume(&ens, &cfg.quad_options()).map_err(|e| lib_error("mixed-volume", e))?;
    Ok(Outcome {
        header: vec!["integral", "error", "oracle", "rel_err"],
        rows: vec![vec![num(c.integral), num(c.error), num(c.oracle), num(c.rel_err)]],
        result: to_value(&c),
        failure: None,
    })
}

fn orthants(cfg: &RunConfig) -> Orthants {
    match cfg.orthants {
        OrthantSpec::Positive => Orthants::Positive,
        OrthantSpec::All => Orthants::All,
    }
}

fn expect_roots_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ens = cfg.build_ensemble()?;
    let region = cfg.build_region(ens.dim())?;
    let quad = match ens.field() {
        Field::Complex => {
            let r = expected_roots(&ens, &region, &cfg.quad_options()).map_err(|e| lib_error("expect-roots", e))?;
            Some(r)
        }
        Field::Real => None,
    };
    let mc = if cfg.trials > 0 {
        Some(estimate_expected_roots(&ens, &region, cfg.trials, cfg.seed, orthants(cfg)).map_err(|e| lib_error("expect-roots", e))?)
    } else {
        None
    };
    let mut row = vec![
        quad.map_or(String::new(), |q| num(q.value)),
        quad.map_or(String::new(), |q| num(q.error)),
    ];
    row.extend(mc.as_ref().map_or(vec![String::new(); 6], report_cells));
    let mut header = vec!["quadrature", "quadrature_error"];
    header.extend(REPORT_COLUMNS);
    Ok(Outcome {
        header,
        rows: vec![row],
        result: json!({ "quadrature": quad, "monte_carlo": mc }),
        failure: None,
    })
}

fn condition_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ens = cfg.build_ensemble()?;
    if ens.dim() > 2 {
        return Err(invalid("ensemble", "`condition` supports n <= 2"));
    }
    let region = cfg.build_region(ens.dim())?;
    let f = sample(&ens, derive_seed(cfg.seed, 0));
    let roots = match ens.field() {
        Field::Complex => all_roots(&f, &ens),
        Field::Real => real_roots_in(&f, &ens, orthants(cfg)),
    }
    .map_err(|e| lib_error("condition", e))?;
    let mut rows = Vec::new();
    let mut listed = Vec::new();
    for pt in roots.points().filter(|pt| region.contains(pt)) {
        let d = distance_to_sigma(&f, &ens, pt).map_err(|e| lib_error("condition", e))?;
        let b = condition_bounds(&f, &ens, pt).map_err(|e| lib_error("condition", e))?;
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
        rows.push(vec![
            "root".to_string(),
            join(pt.p()),
            join(pt.q()),
            num(d),
            num(1.0 / d),
            num(b.lower),
            num(b.upper),
        ]);
        listed.push(json!({ "p": pt.p(), "q": pt.q(), "distance": d, "lower": b.lower, "upper": b.upper }));
    }
    let rc = restricted_condition(&f, &ens, &region, &cfg.grid_options()).map_err(|e| lib_error("condition", e))?;
    let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
    rows.push(vec![
        "region".to_string(),
        join(rc.worst.p()),
        join(rc.worst.q()),
        num(1.0 / rc.mu),
        num(rc.mu),
        String::new(),
        String::new(),
    ]);
    Ok(Outcome {
        header: vec!["kind", "p", "q", "distance", "mu", "lower", "upper"],
        rows,
        result: json!({
            "roots": listed,
            "degenerate_roots": roots.degenerate(),
            "restricted": { "mu": rc.mu, "worst_p": rc.worst.p(), "worst_q": rc.worst.q(), "points": rc.points },
        }),
        failure: None,
    })
}

fn nu_lin_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_eps(cfg)?;
    let n = cfg.n.ok_or_else(|| invalid("n", "required for `nu-lin`"))?;
    let curve = nu_lin_curve(n, &cfg.eps, cfg.trials, cfg.seed, cfg.field).map_err(|e| lib_error("n", e))?;
    let rows = cfg
        .eps
        .iter()
        .zip(&curve)
        .map(|(e, r)| {
            let mut row = vec![num(*e)];
            row.extend(report_cells(r));
            row
        })
        .collect();
    let mut header = vec!["eps"];
    header.extend(REPORT_COLUMNS);
    Ok(Outcome {
        header,
        rows,
        result: json!({ "eps": cfg.eps, "reports": curve }),
        failure: None,
    })
}

fn nu_sparse_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_eps(cfg)?;
    let ens = cfg.build_ensemble()?;
    let region = cfg.build_region(ens.dim())?;
    let grid = cfg.grid_options();
    let curve = nu_sparse_curve(&ens, &region, &cfg.eps, cfg.trials, cfg.seed, cfg.sweep.then_some(&grid))
        .map_err(|e| lib_error("nu-sparse", e))?;
    let rows = curve
        .iter()
        .map(|r| {
            let mut row = vec![num(r.eps)];
            row.extend(report_cells(&r.roots));
            row.push(r.sweep.map_or(String::new(), |s| num(s.estimate)));
            row.push(r.sweep.map_or(String::new(), |s| num(s.ci_high)));
            row
        })
        .collect();
    let mut header = vec!["eps"];
    header.extend(REPORT_COLUMNS);
    header.extend(["sweep_estimate", "sweep_ci_high"]);
    Ok(Outcome {
        header,
        rows,
        result: to_value(&curve),
        failure: None,
    })
}

fn bound_outcome(rows_in: &[BoundRow]) -> Outcome {
    let rows = rows_in
        .iter()
        .map(|r| {
            let mut row = vec![num(r.eps)];
            row.extend(report_cells(&r.empirical));
            row.push(num(r.rhs));
            row.push(if r.pass { "PASS" } else { "FAIL" }.to_string());
            row
        })
        .collect();
    let mut header = vec!["eps"];
    header.extend(REPORT_COLUMNS);
    header.extend(["rhs", "verdict"]);
    let failed: Vec<String> = rows_in.iter().filter(|r| !r.pass).map(|r| format!("eps={}", r.eps)).collect();
    Outcome {
        header,
        rows,
        result: to_value(&rows_in),
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
    }
}

fn single_support(cfg: &RunConfig) -> Result<(Support, DiagonalCovariance), CliError> {
    if cfg.ensemble.len() != 1 {
        return Err(invalid("ensemble", "exactly one entry (the common support) is required"));
    }
    build_item(0, &cfg.ensemble[0])
}

fn thm1_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_eps(cfg)?;
    let (a, _) = single_support(cfg)?;
    let rows = check_thm1(&a, &cfg.eps, cfg.trials, cfg.seed).map_err(|e| lib_error("ensemble[0].support", e))?;
    Ok(bound_outcome(&rows))
}

fn thm3_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let ens = cfg.build_ensemble()?;
    if ens.field() != Field::Real {
        return Err(invalid("field", "`check-thm3` needs a real ensemble"));
    }
    if cfg.region.is_empty() {
        return Err(invalid("region", "`check-thm3` needs explicit p-boxes"));
    }
    if cfg.region.iter().any(|r| r.q.is_some()) {
        return Err(invalid("region", "`check-thm3` uses p-boxes only"));
    }
    let region = cfg.build_region(ens.dim())?;
    let p_boxes: Vec<Vec<(f64, f64)>> = region.boxes().iter().map(|b| b.p.clone()).collect();
    let bound = real_roots_bound(&ens, &p_boxes, &cfg.quad_options()).map_err(|e| lib_error("check-thm3", e))?;
    let mc = estimate_expected_roots(&ens, &region, cfg.trials, cfg.seed, Orthants::Positive)
        .map_err(|e| lib_error("check-thm3", e))?;
    let pass = mc.estimate <= bound + 2.0 * mc.stderr;
    let mut row = report_cells(&mc);
    row.push(num(bound));
    row.push(if pass { "PASS" } else { "FAIL" }.to_string());
    let mut header = REPORT_COLUMNS.to_vec();
    header.extend(["bound", "verdict"]);
    Ok(Outcome {
        header,
        rows: vec![row],
        result: json!({ "monte_carlo": mc, "bound": bound, "pass": pass }),
        failure: (!pass).then(|| "expected real roots exceed the bound".to_string()),
    })
}

fn comparison_outcome(reports: &[ComparisonReport]) -> Outcome {
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![num(r.eps)];
            row.extend(report_cells(&r.lhs));
            row.extend([num(r.rhs.estimate), num(r.rhs.ci_high), num(r.slack)]);
            row.extend(r.factors.iter().map(|(_, v)| num(*v)));
            row.push(if r.pass { "PASS" } else { "FAIL" }.to_string());
            row
        })
        .collect();
    let mut header = vec!["eps"];
    header.extend(REPORT_COLUMNS);
    header.extend(["rhs_estimate", "rhs_ci_high", "slack"]);
    if let Some(r) = reports.first() {
        header.extend(r.factors.iter().map(|(name, _)| *name));
    }
    header.push("verdict");
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(|r| format!("eps={}", r.eps)).collect();
    Outcome {
        header,
        rows,
        result: to_value(&reports),
        failure: (!failed.is_empty()).then(|| failed.join(", ")),
    }
}

fn thm5_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_eps(cfg)?;
    let ens = cfg.build_ensemble()?;
    let region = cfg.build_region(ens.dim())?;
    let (grid, quad) = (cfg.grid_options(), cfg.quad_options());
    let reports = cfg
        .eps
        .iter()
        .map(|&e| check_thm5(&ens, &region, e, cfg.trials, cfg.seed, &grid, &quad))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| lib_error("check-thm5", e))?;
    Ok(comparison_outcome(&reports))
}

fn thm6_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    require_eps(cfg)?;
    let (a, c) = single_support(cfg)?;
    let region = cfg.build_region(a.dim())?;
    let reports = cfg
        .eps
        .iter()
        .map(|&e| check_thm6(&a, &c, &region, e, cfg.trials, cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| lib_error("check-thm6", e))?;
    Ok(comparison_outcome(&reports))
}

fn momentum_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let (a, c) = single_support(cfg)?;
    let n = a.dim();
    let hull = a.hull();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_margin = f64::INFINITY;
    for _ in 0..cfg.trials {
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let y = momentum(&a, &c, &p).map_err(|e| lib_error("ensemble[0]", e))?;
        min_margin = min_margin.min(hull.interior_distance(&y));
    }
    let interior = cfg.trials == 0 || min_margin > 0.0;
    let mut rows = vec![vec!["interior".to_string(), String::new(), num(min_margin), (interior as u8).to_string()]];
    let mut volumes = Vec::new();
    for (i, b) in cfg.momentum_boxes.iter().enumerate() {
        let boxes = vec![b.iter().map(|[lo, hi]| (*lo, *hi)).collect::<Vec<_>>()];
        let v = momentum_pushforward_volume(&a, &c, &boxes, &cfg.quad_options())
            .map_err(|e| lib_error(&format!("momentum_boxes[{i}]"), e))?;
        let lebesgue: f64 = b.iter().map(|[lo, hi]| hi - lo).product();
        let expected = std::f64::consts::PI.powi(n as i32) * lebesgue;
        rows.push(vec!["pushforward".to_string(), i.to_string(), num(v), num(expected)]);
        volumes.push(json!({ "box": b, "volume": v, "pi_n_lebesgue": expected }));
    }
    Ok(Outcome {
        header: vec!["kind", "index", "value", "reference"],
        rows,
        result: json!({ "samples": cfg.trials, "min_interior_margin": min_margin, "interior": interior, "pushforward": volumes }),
        failure: (!interior).then(|| "momentum image touched the boundary".to_string()),
    })
}

/// CSV text: a `schema_version` column first, numbers in `{:.16e}`.
pub fn render_csv(out: &Outcome) -> String {
    let mut s = String::from("schema_version");
    for h in &out.header {
        s.push(',');
        s.push_str(h);
    }
    s.push('\n');
    for row in &out.rows {
        let _ = write!(s, "{SCHEMA_VERSION}");
        for cell in row {
            s.push(',');
            s.push_str(cell);
        }
        s.push('\n');
    }
    s
}

pub fn render_json(cfg: &RunConfig, out: &Outcome) -> String {
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg,
        "result": out.result,
        "pass": out.failure.is_none(),
    });
    serde_json::to_string_pretty(&summary).expect("json summary") + "\n"
}

/// Merge command-line overrides into the file configuration.
pub fn resolve(args: &Args) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            toml::from_str::<RunConfig>(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = &args.command {
        cfg.command = c.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    } else if let Some(o) = std::env::var_os(OUT_ENV) {
        cfg.out = Some(PathBuf::from(o));
    }
    Ok(cfg)
}

fn write_outputs(dir: &Path, cfg: &RunConfig, out: &Outcome) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    fs::write(dir.join(format!("{}.csv", cfg.command)), render_csv(out)).map_err(io)?;
    fs::write(dir.join(format!("{}.json", cfg.command)), render_json(cfg, out)).map_err(io)?;
    Ok(())
}

fn run_resolved(args: &Args) -> Result<(RunConfig, Outcome), CliError> {
    let cfg = resolve(args)?;
    if !cfg.command.is_empty() && !COMMANDS.contains(&cfg.command.as_str()) {
        return Err(CliError::UnknownCommand(cfg.command.clone()));
    }
    let out = match args.threads {
        Some(0) => return Err(invalid("--threads", "must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?
            .install(|| execute(&cfg))?,
        None => execute(&cfg)?,
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sparsecond-out"));
    write_outputs(&dir, &cfg, &out)?;
    Ok((cfg, out))
}

/// Parse arguments, run, write outputs and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_resolved(&args) {
        Ok((cfg, out)) => {
            print!("{}", render_csv(&out));
            match out.failure {
                Some(m) => {
                    let e = CliError::CheckFailed(format!("{}: {m}", cfg.command));
                    eprintln!("{e}");
                    e.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn covariance_length_is_checked_with_path() {
        let cfg = parse(
            r#"
            command = "mixed-volume"
            [[ensemble]]
            support = [[0, 0], [1, 0], [0, 1]]
            [[ensemble]]
            support = [[0, 0], [1, 0], [0, 1], [1, 1]]
            covariance = [1.0, 2.0, 3.0]
            "#,
        );
        match execute(&cfg) {
            Err(CliError::Validation(m)) => assert!(m.starts_with("ensemble[1].covariance"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_command_has_its_own_code() {
        let cfg = RunConfig {
            command: "frobnicate".into(),
            ..RunConfig::default()
        };
        let e = execute(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn mixed_volume_of_two_simplices() {
        let cfg = parse(
            r#"
            command = "mixed-volume"
            [[ensemble]]
            support = [[0, 0], [1, 0], [0, 1]]
            [[ensemble]]
            support = [[0, 0], [1, 0], [0, 1]]
            "#,
        );
        let out = execute(&cfg).unwrap();
        let rel = out.result["rel_err"].as_f64().unwrap();
        assert!(rel <= 0.01);
        assert_eq!(out.result["oracle"].as_f64().unwrap(), 1.0);
        let csv = render_csv(&out);
        assert!(csv.starts_with("schema_version,integral,error,oracle,rel_err\n1,"));
    }

    #[test]
    fn infinite_bounds_parse() {
        let cfg = parse(
            r#"
            command = "expect-roots"
            trials = 0
            [[ensemble]]
            support = [[0], [1], [2], [3], [4]]
            [[region]]
            p = [[-inf, 0.0]]
            "#,
        );
        let out = execute(&cfg).unwrap();
        let v = out.result["quadrature"]["value"].as_f64().unwrap();
        assert!((v - 2.0).abs() < 1e-3);
    }

    #[test]
    fn kostlan_entries_need_dim() {
        let cfg = parse(
            r#"
            command = "mixed-volume"
            [[ensemble]]
            kostlan = 3
            "#,
        );
        match execute(&cfg) {
            Err(CliError::Validation(m)) => assert!(m.starts_with("ensemble[0].dim"), "{m}"),
            other => panic!("{other:?}"),
        }
    }
}
