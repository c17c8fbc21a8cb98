//! Command-line front end: CSV in, JSON certificate reports out.
//!
//! Every index the CLI reads or writes (rows in `--subsets`/`--fold-file`,
//! columns in `--models`) is zero-based, matching the library.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::constrained::{self, GlmObjective, KktPoint};
use crate::cox::{self, SurvivalDataset};
use crate::error::{Error, Result};
use crate::glm::{self, Dataset, FitOptions};
use crate::losses::{make_family, FamilySpec, LossFamily};
use crate::nls::{self, LinkSpec};
use crate::numkit::{DenseMatrix, Vector};
use crate::resample::{self, LooContext, Targets, DEFAULT_MODEL_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Fit the GLM-type estimator.
    Fit,
    /// Root bracket and expansion certificate at a target.
    Certify,
    /// Certified approximate leave-one/k-out.
    Loo,
    /// Per-coordinate marginal certificates.
    Screen,
    /// Certificates over a list of submodels.
    Posi,
    /// Cox partial likelihood certificate.
    CoxCertify,
    /// Nonlinear least squares certificate.
    NlsCertify,
    /// Equality-constrained certificate.
    Kkt,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Certify => "certify",
            Command::Loo => "loo",
            Command::Screen => "screen",
            Command::Posi => "posi",
            Command::CoxCertify => "cox-certify",
            Command::NlsCertify => "nls-certify",
            Command::Kkt => "kkt",
        }
    }
}

/// Run configuration, parsed from the command line.
#[derive(Clone, Debug, Parser)]
#[command(name = "mestcert", version, about = "Deterministic finite-sample certificates for M-estimators")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// CSV with a header row: `y` and/or `time,status`, all other columns are covariates.
    pub input: PathBuf,
    /// squared | logistic | poisson | negbin:ALPHA
    #[arg(long, default_value = "squared")]
    pub family: String,
    /// zeros | plug-in | PATH to a file of numbers. Default depends on the command.
    #[arg(long)]
    pub target: Option<String>,
    /// Reference curvature: a p×p matrix (certify) or p numbers (screen).
    #[arg(long)]
    pub q_ref: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Rows to leave out one at a time, e.g. "1,4-7".
    #[arg(long)]
    pub subsets: Option<String>,
    /// One comma-separated row set per line, each left out jointly.
    #[arg(long)]
    pub fold_file: Option<PathBuf>,
    /// One comma-separated column set per line.
    #[arg(long)]
    pub models: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MODEL_CAP)]
    pub model_cap: usize,
    /// Also run the exact oracles (refits, KKT solve).
    #[arg(long)]
    pub exact: bool,
    /// logistic | identity (nls-certify)
    #[arg(long, default_value = "logistic")]
    pub link: String,
    /// Constraint rows `a_1,…,a_p,b`, one per line (kkt).
    #[arg(long)]
    pub constraint: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parsed CSV input.
#[derive(Clone, Debug)]
pub enum Input {
    Regression(Dataset),
    Survival(SurvivalDataset),
}

/// Covariate names are kept for the report.
#[derive(Clone, Debug)]
pub struct Table {
    pub covariates: Vec<String>,
    pub input: Input,
}

fn parse_cell(s: &str, row: usize, col: &str) -> Result<f64> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Csv(format!("row {row}, column '{col}': '{t}' is not a finite number"))),
    }
}

/// Reads a headed CSV. With `time` and `status` columns the result is a
/// survival dataset (a `y` column, if any, is ignored); otherwise `y` is required.
/// Rows are numbered from 1 after the header in error messages.
pub fn read_csv(path: &Path) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Csv("empty file".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (iy, it, is) = (find("y"), find("time"), find("status"));
    let survival = it.is_some() && is.is_some();
    if !survival && iy.is_none() {
        return Err(Error::Csv("missing required column 'y'".into()));
    }
    let special = [iy, it, is];
    let cov: Vec<usize> = (0..headers.len()).filter(|j| !special.contains(&Some(*j))).collect();
    if cov.is_empty() {
        return Err(Error::Csv("no covariate columns".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut times = Vec::new();
    let mut status = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |j: usize| parse_cell(rec.get(j).unwrap_or(""), row, &headers[j]);
        for &j in &cov {
            xs.push(cell(j)?);
        }
        if survival {
            times.push(cell(it.unwrap())?);
            let s = cell(is.unwrap())?;
            if s != 0.0 && s != 1.0 {
                return Err(Error::Csv(format!("row {row}, column 'status': must be 0 or 1, got {s}")));
            }
            status.push(s == 1.0);
        } else {
            ys.push(cell(iy.unwrap())?);
        }
    }
    let n = if survival { times.len() } else { ys.len() };
    if n == 0 {
        return Err(Error::Csv("no data rows".into()));
    }
    let x = DenseMatrix::new(n, cov.len(), xs)?;
    let input = if survival {
        Input::Survival(SurvivalDataset::new(x, Vector::from(times), status)?)
    } else {
        Input::Regression(Dataset::new(x, Vector::from(ys))?)
    };
    Ok(Table { covariates: cov.iter().map(|&j| headers[j].clone()).collect(), input })
}

/// Numbers separated by commas or whitespace, one record per line; blank
/// lines and lines starting with `#` are skipped.
pub fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::InvalidInput(format!("{}:{}: '{s}' is not a finite number", path.display(), k + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(row);
    }
    Ok(out)
}

fn read_index_sets(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(parse_index_list)
        .collect()
}

/// `"1,4-7"` → `[1, 4, 5, 6, 7]`.
pub fn parse_index_list(spec: &str) -> Result<Vec<usize>> {
    let bad = |s: &str| Error::InvalidInput(format!("bad index list item '{s}'"));
    let mut out = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad(item))?;
                let b: usize = b.trim().parse().map_err(|_| bad(item))?;
                if a > b {
                    return Err(bad(item));
                }
                out.extend(a..=b);
            }
            None => out.push(item.parse().map_err(|_| bad(item))?),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("empty index list '{spec}'")));
    }
    Ok(out)
}

enum TargetSource {
    Zeros,
    PlugIn,
    File(Vec<Vec<f64>>),
}

fn target_source(cfg: &RunConfig, default: &str) -> Result<TargetSource> {
    match cfg.target.as_deref().unwrap_or(default) {
        "zeros" => Ok(TargetSource::Zeros),
        "plug-in" | "plugin" => Ok(TargetSource::PlugIn),
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::InvalidInput(format!("target must be zeros, plug-in or an existing file, got '{path}'")));
            }
            Ok(TargetSource::File(read_numbers(p)?))
        }
    }
}

fn single_vector(rows: Vec<Vec<f64>>, p: usize) -> Result<Vector> {
    let v: Vec<f64> = rows.into_iter().flatten().collect();
    crate::error::check_dim(p, v.len())?;
    Ok(Vector::from(v))
}

fn resolve_target(src: TargetSource, p: usize, plug_in: impl FnOnce() -> Result<Vector>) -> Result<Vector> {
    match src {
        TargetSource::Zeros => Ok(Vector::zeros(p)),
        TargetSource::PlugIn => plug_in(),
        TargetSource::File(rows) => single_vector(rows, p),
    }
}

fn regression(t: &Table, cmd: Command) -> Result<&Dataset> {
    match &t.input {
        Input::Regression(d) => Ok(d),
        Input::Survival(_) => Err(Error::InvalidInput(format!("{} needs a 'y' column, not time/status", cmd.name()))),
    }
}

fn family(cfg: &RunConfig) -> Result<LossFamily> {
    make_family(cfg.family.parse::<FamilySpec>()?)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))
}

/// Header fields followed by the flattened body.
fn report(cmd: Command, table: &Table, extra: Vec<(&str, Value)>, body: Value) -> Value {
    let (n, p) = match &table.input {
        Input::Regression(d) => (d.n(), d.p()),
        Input::Survival(s) => (s.n(), s.p()),
    };
    let mut m = Map::new();
    m.insert("command".into(), json!(cmd.name()));
    m.insert("n".into(), json!(n));
    m.insert("p".into(), json!(p));
    m.insert("covariates".into(), json!(table.covariates));
    for (k, v) in extra {
        m.insert(k.into(), v);
    }
    match body {
        Value::Object(b) => m.extend(b),
        other => {
            m.insert("result".into(), other);
        }
    }
    Value::Object(m)
}

fn fit_opts(cfg: &RunConfig) -> FitOptions {
    FitOptions { tol: cfg.tol, max_iter: cfg.max_iter }
}

/// Oracle tolerance: never looser than 1e-12.
fn oracle_opts(cfg: &RunConfig) -> FitOptions {
    FitOptions { tol: cfg.tol.min(1e-12), max_iter: cfg.max_iter.max(200) }
}

/// Runs the command and returns the JSON report.
pub fn execute(cfg: &RunConfig) -> Result<Value> {
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidInput(format!("--tol must be positive, got {}", cfg.tol)));
    }
    let table = read_csv(&cfg.input)?;
    let cmd = cfg.command;
    match cmd {
        Command::Fit => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let th = glm::fit(d, &fam, &Vector::zeros(d.p()), fit_opts(cfg))?;
            let body = json!({
                "estimate": th,
                "objective": glm::objective(d, &fam, &th)?,
                "score_norm": glm::score(d, &fam, &th)?.norm2(),
            });
            Ok(report(cmd, &table, vec![("family", json!(fam.name()))], body))
        }
        Command::Certify => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let t = resolve_target(target_source(cfg, "zeros")?, d.p(), || {
                glm::fit(d, &fam, &Vector::zeros(d.p()), fit_opts(cfg))
            })?;
            let q_ref = match &cfg.q_ref {
                Some(path) => {
                    let rows = read_numbers(path)?;
                    Some(DenseMatrix::from_rows(&rows)?)
                }
                None => None,
            };
            let c = glm::certify(d, &fam, &t, q_ref.as_ref())?;
            let mut body = to_value(&c)?;
            // The headline bound follows the Hessian the step was taken with.
            body["expansion_bound"] = json!(c.expansion_bound_reference.unwrap_or(c.expansion_bound_empirical));
            if cfg.exact {
                let root = glm::fit(d, &fam, &t, oracle_opts(cfg))?;
                let err = (&root - &t).norm2();
                body["exact_root"] = to_value(&root)?;
                body["exact_error"] = json!(err);
                body["exact_remainder"] = json!((&(&root - &t) - &c.newton_step).norm2());
            }
            Ok(report(cmd, &table, vec![("family", json!(fam.name()))], body))
        }
        Command::Loo => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let th = glm::fit(d, &fam, &Vector::zeros(d.p()), oracle_opts(cfg))?;
            let mut sets = Vec::new();
            if let Some(s) = &cfg.subsets {
                sets.extend(parse_index_list(s)?.into_iter().map(|i| vec![i]));
            }
            if let Some(f) = &cfg.fold_file {
                sets.extend(read_index_sets(f)?);
            }
            if sets.is_empty() {
                sets = resample::singletons(d.n());
            }
            let ctx = LooContext::new(d, &fam, &th)?;
            let rep = ctx.sweep(&sets, cfg.exact.then(|| oracle_opts(cfg)))?;
            let certified = rep.per_fold.iter().filter(|e| e.certified).count();
            let extra = vec![("family", json!(fam.name())), ("certified_folds", json!(certified))];
            Ok(report(cmd, &table, extra, to_value(&rep)?))
        }
        Command::Screen => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let targets = match target_source(cfg, "plug-in")? {
                TargetSource::PlugIn => Targets::PlugIn,
                TargetSource::Zeros => Targets::Given(vec![Vector::zeros(1); d.p()]),
                TargetSource::File(rows) => {
                    let v = single_vector(rows, d.p())?;
                    Targets::Given(v.iter().map(|&t| Vector::from(vec![t])).collect())
                }
            };
            let q_ref = match &cfg.q_ref {
                Some(path) => Some(single_vector(read_numbers(path)?, d.p())?.into_vec()),
                None => None,
            };
            let rep = resample::screen_marginal(d, &fam, &targets, q_ref.as_deref(), fit_opts(cfg))?;
            Ok(report(cmd, &table, vec![("family", json!(fam.name()))], to_value(&rep)?))
        }
        Command::Posi => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let path = cfg.models.as_ref().ok_or_else(|| Error::InvalidInput("posi needs --models".into()))?;
            let models = read_index_sets(path)?;
            let targets = match target_source(cfg, "plug-in")? {
                TargetSource::PlugIn => Targets::PlugIn,
                TargetSource::Zeros => Targets::Given(models.iter().map(|m| Vector::zeros(m.len())).collect()),
                TargetSource::File(rows) => Targets::Given(rows.into_iter().map(Vector::from).collect()),
            };
            let rep = resample::posi_sweep(d, &fam, &models, &targets, cfg.model_cap, fit_opts(cfg))?;
            Ok(report(cmd, &table, vec![("family", json!(fam.name()))], to_value(&rep)?))
        }
        Command::CoxCertify => {
            let Input::Survival(s) = &table.input else {
                return Err(Error::InvalidInput("cox-certify needs 'time' and 'status' columns".into()));
            };
            let t = resolve_target(target_source(cfg, "zeros")?, s.p(), || {
                cox::cox_fit(s, &Vector::zeros(s.p()), fit_opts(cfg))
            })?;
            let c = cox::certify_cox(s, &t)?;
            let mut body = to_value(&c)?;
            if cfg.exact {
                let root = cox::cox_fit(s, &t, oracle_opts(cfg))?;
                body["exact_root"] = to_value(&root)?;
                body["exact_error"] = json!((&root - &t).norm2());
                body["exact_remainder"] = json!((&(&root - &t) - &c.newton_step).norm2());
            }
            Ok(report(cmd, &table, vec![], body))
        }
        Command::NlsCertify => {
            let d = regression(&table, cmd)?;
            let link = match cfg.link.as_str() {
                "logistic" => LinkSpec::logistic(),
                "identity" => LinkSpec::identity(),
                other => return Err(Error::InvalidInput(format!("unknown link '{other}'"))),
            };
            let t = resolve_target(target_source(cfg, "zeros")?, d.p(), || {
                nls::nls_solve(d, &link, &Vector::zeros(d.p()), fit_opts(cfg))
            })?;
            let c = nls::certify_nls(d, &link, &t)?;
            let mut body = to_value(&c)?;
            if cfg.exact {
                let root = nls::nls_solve(d, &link, &t, oracle_opts(cfg))?;
                body["exact_root"] = to_value(&root)?;
                body["exact_error"] = json!((&root - &t).norm2());
            }
            Ok(report(cmd, &table, vec![("link", json!(link.name))], body))
        }
        Command::Kkt => {
            let d = regression(&table, cmd)?;
            let fam = family(cfg)?;
            let path = cfg.constraint.as_ref().ok_or_else(|| Error::InvalidInput("kkt needs --constraint".into()))?;
            let rows = read_numbers(path)?;
            if rows.is_empty() || rows.iter().any(|r| r.len() != d.p() + 1) {
                return Err(Error::InvalidInput(format!("each constraint row needs p + 1 = {} numbers", d.p() + 1)));
            }
            let a = DenseMatrix::from_rows(&rows.iter().map(|r| r[..d.p()].to_vec()).collect::<Vec<_>>())?;
            let b = Vector::from(rows.iter().map(|r| r[d.p()]).collect::<Vec<_>>());
            let obj = GlmObjective { data: d, family: &fam };
            let solve = |init: &Vector| -> Result<KktPoint> {
                let nu = constrained::default_multiplier(&obj, &a, init)?;
                let start = KktPoint::evaluate(&obj, &a, &b, init.clone(), nu)?;
                constrained::kkt_solve(&obj, &a, &b, &start, oracle_opts(cfg).tol, oracle_opts(cfg).max_iter)
            };
            let beta0 = resolve_target(target_source(cfg, "plug-in")?, d.p(), || Ok(solve(&Vector::zeros(d.p()))?.beta))?;
            let nu0 = constrained::default_multiplier(&obj, &a, &beta0)?;
            let (l, alpha) = constrained::glm_hessian_lipschitz(d, &fam, &beta0)?;
            let c = constrained::certify_constrained(&obj, &a, &b, &beta0, &nu0, l, alpha)?;
            let mut body = to_value(&c)?;
            if cfg.exact {
                let pt = solve(&beta0)?;
                body["exact_root"] = to_value(&pt.beta)?;
                body["exact_error"] = json!((&pt.beta - &beta0).norm2());
                body["exact_remainder"] = json!((&(&pt.beta - &beta0) - &c.step).norm2());
            }
            Ok(report(cmd, &table, vec![("family", json!(fam.name()))], body))
        }
    }
}

/// Pretty JSON with a trailing newline. Keys are sorted, floats are printed
/// in shortest round-trip form, and non-finite floats become `null`.
pub fn render(v: &Value) -> String {
    let sorted: Value = sort_keys(v);
    let mut s = serde_json::to_string_pretty(&sorted).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn sort_keys(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let b: BTreeMap<&String, Value> = m.iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(b.into_iter().map(|(k, v)| (k.clone(), v)).collect())
        }
        Value::Array(a) => Value::Array(a.iter().map(sort_keys).collect()),
        other => other.clone(),
    }
}

fn write_output(cfg: &RunConfig, text: &str) -> Result<()> {
    match &cfg.out {
        Some(p) => fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs one configuration; 0 on success (including invalid certificates), 2 on hard errors.
pub fn run(cfg: &RunConfig) -> i32 {
    let result = match cfg.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| execute(cfg)),
            Err(e) => Err(Error::InvalidInput(format!("cannot build thread pool: {e}"))),
        },
        None => execute(cfg),
    };
    match result.and_then(|v| write_output(cfg, &render(&v))) {
        Ok(()) => 0,
        Err(e) => {
            print!("{}", render(&json!({ "error": e.to_string() })));
            2
        }
    }
}

/// Parses `args` (program name first) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(cfg) => run(&cfg),
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            0
        }
        Err(e) => {
            print!("{}", render(&json!({ "error": e.to_string() })));
            2
        }
    }
}
