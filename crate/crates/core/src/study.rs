//! Batch studies driven by a TOML file: metrics tables, bound tables,
//! empirical-vs-bound verification, rate regressions and ε selection.
//!
//! Every report is a CSV file whose first line is a `#` comment naming the
//! schema and its version. Values are written in shortest round-trip
//! exponent form, so reruns with the same seed are byte-identical.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::bounds::{self, BoundId, BoundInputs, BoundParams, BoundReport, BoundValue};
use crate::engine::{self, PathBatch, PathConfig, Scheme};
use crate::error::{Error, Result};
use crate::estimators::{self, Functional, PayoffSpec, ScalarFn};
use crate::jump_metrics;
use crate::levy_models::{GeneratingTriplet, ModelSpec};
use crate::stats;

pub const SCHEMA_VERSION: u32 = 1;

/// Multiple of the standard error added to a bound before comparing.
pub const ENVELOPE_SE: f64 = 4.0;

pub(crate) fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    Error::Config {
        line,
        message: e.message().to_string(),
    }
}

/// 1-based line of the first `key =` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Metrics,
    Bounds,
    Verify,
    Rates,
    SelectEps,
}

impl StudyKind {
    pub const ALL: [StudyKind; 5] = [
        StudyKind::Metrics,
        StudyKind::Bounds,
        StudyKind::Verify,
        StudyKind::Rates,
        StudyKind::SelectEps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Metrics => "metrics",
            StudyKind::Bounds => "bounds",
            StudyKind::Verify => "verify",
            StudyKind::Rates => "rates",
            StudyKind::SelectEps => "select_eps",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown study kind `{s}`")))
    }
}

/// `[[payoffs]]` entry.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: String,
    pub f: Option<String>,
    pub k: Option<f64>,
    /// Level, strike of `exp_supremum`, or strike of `call`/`put`.
    pub x: Option<f64>,
}

/// `[bound_params]` table; the payoff supplies `K`.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParamsConfig {
    pub c_lipderiv: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub theta: Option<f64>,
    pub k_x: Option<f64>,
    pub calibration: Option<f64>,
}

/// `[levels]` table: CDF levels `lo..=hi` in `n` equal steps.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for LevelGrid {
    fn default() -> Self {
        LevelGrid { lo: -1.0, hi: 1.0, n: 41 }
    }
}

impl LevelGrid {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (self.n - 1) as f64)
            .collect()
    }
}

fn default_t() -> f64 {
    1.0
}
fn default_paths() -> usize {
    10_000
}
fn default_steps() -> usize {
    256
}
fn default_refine() -> f64 {
    50.0
}
fn default_schemes() -> Vec<String> {
    vec!["truncate".into(), "gaussian".into()]
}
fn default_range() -> [f64; 2] {
    [1e-6, 1.0]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: Option<StudyKind>,
    pub label: Option<String>,
    pub out: Option<PathBuf>,
    pub model: ModelSpec,
    #[serde(default = "default_t")]
    pub t: f64,
    /// Strictly decreasing.
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Approximations compared with the reference in `rates`.
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    /// The reference process is `X^{ε/refine_factor}` (exact `X` for finite activity).
    #[serde(default = "default_refine")]
    pub refine_factor: f64,
    #[serde(default)]
    pub payoffs: Vec<PayoffConfig>,
    #[serde(default)]
    pub bounds: Vec<String>,
    #[serde(default)]
    pub budgets: Vec<f64>,
    #[serde(default = "default_range")]
    pub eps_range: [f64; 2],
    #[serde(default)]
    pub levels: LevelGrid,
    #[serde(default)]
    pub bound_params: BoundParamsConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub kind: Option<StudyKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_paths: Option<usize>,
    pub label: Option<String>,
    pub workers: Option<usize>,
}

impl StudyConfig {
    /// Parses and validates a config; semantic errors carry the line of the key.
    pub fn from_toml_str(text: &str) -> Result<StudyConfig> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        cfg.validate().map_err(|e| match e {
            Error::Config { line: None, message } => {
                let key = message.split('`').nth(1).unwrap_or("");
                Error::Config {
                    line: line_of(text, key),
                    message,
                }
            }
            other => other,
        })?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<StudyConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.kind {
            self.kind = Some(k);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(n) = o.n_paths {
            self.n_paths = n;
        }
        if let Some(l) = &o.label {
            self.label = Some(l.clone());
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Err(Error::Config { line: None, message });
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("`t` must be > 0, got {}", self.t));
        }
        if self.eps.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return bad("`eps` entries must lie in (0, 1]".into());
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return bad("`eps` grid must be strictly decreasing".into());
        }
        if self.n_paths == 0 {
            return bad("`n_paths` must be >= 1".into());
        }
        if self.n_steps == 0 {
            return bad("`n_steps` must be >= 1".into());
        }
        if !(self.refine_factor > 1.0) {
            return bad(format!("`refine_factor` must be > 1, got {}", self.refine_factor));
        }
        if let Some(l) = &self.label {
            if l.is_empty() || !l.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return bad(format!("`label` must be a non-empty file-name token, got `{l}`"));
            }
        }
        for b in &self.bounds {
            if let Err(e) = BoundId::from_str(b) {
                return bad(format!("`bounds`: {e}"));
            }
        }
        for s in &self.schemes {
            if !matches!(s.as_str(), "truncate" | "gaussian") {
                return bad(format!("`schemes`: unknown scheme `{s}` (truncate, gaussian)"));
            }
        }
        for p in &self.payoffs {
            if let Err(e) = payoff_of(p) {
                return bad(format!("`kind` of payoff: {e}"));
            }
        }
        if self.budgets.iter().any(|b| !(*b > 0.0)) {
            return bad("`budgets` entries must be > 0".into());
        }
        let [lo, hi] = self.eps_range;
        if !(lo > 0.0 && lo < hi && hi <= 1.0) {
            return bad(format!("`eps_range` must satisfy 0 < lo < hi <= 1, got [{lo}, {hi}]"));
        }
        if self.levels.n == 0 || !(self.levels.hi >= self.levels.lo) {
            return bad("`levels` needs n >= 1 and hi >= lo".into());
        }
        let needs_eps = !matches!(self.kind, Some(StudyKind::SelectEps) | None);
        if needs_eps && self.eps.is_empty() {
            return bad("`eps` grid is empty".into());
        }
        Ok(())
    }

    fn kind(&self) -> Result<StudyKind> {
        self.kind.ok_or_else(|| Error::Config {
            line: None,
            message: "study kind missing: set `kind` or pass --kind".into(),
        })
    }

    fn bound_ids(&self) -> Vec<BoundId> {
        self.bounds.iter().filter_map(|b| BoundId::from_str(b).ok()).collect()
    }

    fn base_params(&self) -> BoundParams {
        let c = &self.bound_params;
        let d = BoundParams::default();
        BoundParams {
            t: self.t,
            c_lipderiv: c.c_lipderiv.unwrap_or(d.c_lipderiv),
            p: c.p,
            q: c.q,
            theta: c.theta.unwrap_or(d.theta),
            k_x: c.k_x,
            calibration: c.calibration,
            ..d
        }
    }
}

fn payoff_of(p: &PayoffConfig) -> Result<PayoffSpec> {
    PayoffSpec::from_parts(&p.kind, p.f.as_deref(), p.k, p.x)
}

/// Process exit status of an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Io { .. } | Error::UnknownModel(_) | Error::InvalidParameter { .. } => 2,
        Error::Verification(_) => 4,
        _ => 3,
    }
}

/// Files written by a study and the number of failed checks.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutcome {
    pub kind: StudyKind,
    pub files: Vec<PathBuf>,
    /// FAIL verdicts (verify) or unreachable budgets (select_eps).
    pub failures: usize,
}

impl StudyOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures > 0 {
            4
        } else {
            0
        }
    }
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A CSV table with its schema name.
struct Table {
    schema: String,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(schema: impl Into<String>, header: Vec<&'static str>) -> Table {
        Table {
            schema: schema.into(),
            header,
            rows: Vec::new(),
        }
    }

    fn render(&self) -> Result<Vec<u8>> {
        let mut out = format!("# smalljump {} schema v{SCHEMA_VERSION}\n", self.schema).into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        let fail = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
        drop(w);
        Ok(out)
    }

    fn write(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        let path = dir.join(format!("{stem}.csv"));
        std::fs::write(&path, self.render()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn label_or_timestamp(cfg: &StudyConfig) -> String {
    cfg.label.clone().unwrap_or_else(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        secs.to_string()
    })
}

/// Runs the study and writes its reports into `out` (default `.`).
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let triplet = cfg.model.build()?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let model: String = triplet
        .model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    let stem = |k: &str| format!("{k}_{model}_{}", label_or_timestamp(cfg));
    let (tables, failures) = match kind {
        StudyKind::Metrics => (vec![(stem("metrics"), metrics_table(cfg, &triplet)?)], 0),
        StudyKind::Bounds => (vec![(stem("bounds"), bounds_table(cfg, &triplet)?)], 0),
        StudyKind::Verify => {
            let (t, f) = verify_table(cfg, &triplet)?;
            (vec![(stem("verify"), t)], f)
        }
        StudyKind::Rates => {
            let (points, fits) = rates_tables(cfg, &triplet)?;
            (vec![(stem("rates"), fits), (stem("rates-points"), points)], 0)
        }
        StudyKind::SelectEps => {
            let (t, f) = select_eps_table(cfg, &triplet)?;
            (vec![(stem("select_eps"), t)], f)
        }
    };
    let mut files = Vec::with_capacity(tables.len());
    for (name, table) in &tables {
        files.push(table.write(&dir, name)?);
    }
    Ok(StudyOutcome { kind, files, failures })
}

fn metrics_table(cfg: &StudyConfig, triplet: &GeneratingTriplet) -> Result<Table> {
    let mut t = Table::new(
        "metrics",
        vec![
            "model", "eps", "sigma", "sigma0", "rho", "beta", "lambda_tail", "compensator", "infinite_activity",
            "sigma_over_eps", "beta1_t", "beta2_t",
        ],
    );
    for &eps in &cfg.eps {
        let m = jump_metrics::small_jump_metrics(triplet, eps)?;
        t.rows.push(vec![
            triplet.model.clone(),
            num(eps),
            num(m.sigma),
            num(m.sigma0),
            num(m.rho),
            num(m.beta),
            num(m.lambda_tail),
            num(m.compensator),
            m.infinite_activity.to_string(),
            num(m.sigma / eps),
            num(jump_metrics::beta1(m.beta, cfg.t)),
            num(jump_metrics::beta2(m.beta, cfg.t)),
        ]);
    }
    Ok(t)
}

fn report_row(model: &str, r: &BoundReport) -> Vec<String> {
    let value = match &r.value {
        Some(BoundValue::Number(v)) => num(*v),
        Some(BoundValue::Shape(s)) => s.clone(),
        None => String::new(),
    };
    vec![
        model.to_string(),
        r.bound.code().to_string(),
        r.bound.name().to_string(),
        num(r.eps),
        value,
        opt_num(r.shape_value),
        r.constant_mode.as_str().to_string(),
        r.validity_summary(),
        r.warnings.join(";"),
        r.statement.to_string(),
    ]
}

fn bounds_table(cfg: &StudyConfig, triplet: &GeneratingTriplet) -> Result<Table> {
    let mut t = Table::new(
        "bounds",
        vec![
            "model", "bound", "name", "eps", "value", "shape_value", "constant_mode", "validity", "warnings", "statement",
        ],
    );
    let ids = if cfg.bounds.is_empty() {
        BoundId::ALL.to_vec()
    } else {
        cfg.bound_ids()
    };
    let mut params = cfg.base_params();
    params.k_lip = cfg.payoffs.iter().find_map(|p| p.k).unwrap_or(1.0);
    for &eps in &cfg.eps {
        let inputs = BoundInputs::new(triplet, eps, params.clone())?;
        for &id in &ids {
            t.rows.push(report_row(&triplet.model, &bounds::evaluate_bound(id, &inputs)));
        }
    }
    Ok(t)
}

/// Reference, truncated and Gaussian batches at one ε on shared streams.
struct EpsRun {
    eps: f64,
    reference: PathBatch,
    truncate: PathBatch,
    gaussian: PathBatch,
}

fn reference_scheme(triplet: &GeneratingTriplet, eps: f64, factor: f64) -> Scheme {
    let eps_ref = if triplet.measure.is_finite_activity() { 0.0 } else { eps / factor };
    Scheme::Refined { eps_ref }
}

fn simulate_eps(cfg: &StudyConfig, triplet: &GeneratingTriplet, eps: f64) -> Result<EpsRun> {
    let mut pc = PathConfig::new(cfg.t, cfg.n_steps, eps, Scheme::Truncate, cfg.n_paths, cfg.seed);
    pc.workers = cfg.workers;
    let schemes = [
        reference_scheme(triplet, eps, cfg.refine_factor),
        Scheme::Truncate,
        Scheme::Gaussian,
    ];
    let mut v = engine::simulate_coupled(triplet, &pc, &schemes)?.into_iter();
    let mut next = || v.next().ok_or_else(|| Error::Numerical("missing batch".into()));
    Ok(EpsRun {
        eps,
        reference: next()?,
        truncate: next()?,
        gaussian: next()?,
    })
}

/// Default payoff for a bound when the config lists none of its class.
fn default_payoff(id: BoundId) -> Option<PayoffSpec> {
    match id {
        BoundId::T1 | BoundId::B3 => Some(PayoffSpec::LipschitzTerminal { f: ScalarFn::Identity, k: 1.0 }),
        BoundId::T2 | BoundId::T3 => Some(PayoffSpec::SmoothTerminal { f: ScalarFn::Sin }),
        BoundId::T4 | BoundId::B2 => Some(PayoffSpec::SupremumLipschitz { f: ScalarFn::Identity, k: 1.0 }),
        BoundId::B5 => Some(PayoffSpec::ExpSupremum { strike: 1.0 }),
        _ => None,
    }
}

fn payoff_fits(id: BoundId, p: &PayoffSpec) -> bool {
    matches!(
        (id, p),
        (BoundId::T1 | BoundId::B3, PayoffSpec::LipschitzTerminal { .. })
            | (BoundId::T2 | BoundId::T3, PayoffSpec::SmoothTerminal { .. })
            | (BoundId::T4 | BoundId::B2, PayoffSpec::SupremumLipschitz { .. })
            | (BoundId::B5, PayoffSpec::ExpSupremum { .. })
    )
}

/// One empirical-vs-bound comparison.
struct Check {
    payoff_id: String,
    empirical: f64,
    stderr: f64,
    report: BoundReport,
}

fn abs_paired(payoff: &PayoffSpec, a: &PathBatch, b: &PathBatch) -> Result<(f64, f64)> {
    let e = estimators::paired_difference(payoff, a, b)?;
    Ok((e.mean.abs(), e.stderr))
}

fn exp_moment(p: f64, batches: [&PathBatch; 2]) -> Result<f64> {
    let mut total = 0.0;
    for b in batches {
        let v: Vec<f64> = b.supremum()?.iter().map(|m| (p * m).exp()).collect();
        total += stats::mean_stderr(&v).0;
    }
    Ok(total)
}

fn checks_for(
    id: BoundId,
    run: &EpsRun,
    payoffs: &[PayoffSpec],
    params: &BoundParams,
    triplet: &GeneratingTriplet,
    levels: &[f64],
) -> Result<Vec<Check>> {
    let approx = if id.is_truncation() { &run.truncate } else { &run.gaussian };
    let base_inputs = |params: BoundParams| BoundInputs::new(triplet, run.eps, params);
    let mut out = Vec::new();
    match id {
        BoundId::T1 | BoundId::T2 | BoundId::T3 | BoundId::T4 | BoundId::B2 | BoundId::B3 | BoundId::B5 => {
            let mut list: Vec<PayoffSpec> = payoffs.iter().copied().filter(|p| payoff_fits(id, p)).collect();
            if list.is_empty() {
                list.extend(default_payoff(id));
            }
            for payoff in list {
                let mut prm = params.clone();
                if let Some(k) = payoff.lipschitz() {
                    prm.k_lip = k;
                }
                if let PayoffSpec::SmoothTerminal { f } = payoff {
                    if id == BoundId::T3 {
                        prm.c_lipderiv = f.derivative_lipschitz().unwrap_or(prm.c_lipderiv);
                    }
                    if let Some(f2) = f.second_derivative() {
                        let e = estimators::second_derivative_expectation(f2, &run.truncate)?;
                        prm.efpp = Some((e.mean, e.stderr));
                    }
                }
                let (empirical, stderr) = abs_paired(&payoff, &run.reference, approx)?;
                let report = bounds::evaluate_bound(id, &base_inputs(prm)?);
                out.push(Check {
                    payoff_id: payoff.id(),
                    empirical,
                    stderr,
                    report,
                });
            }
        }
        BoundId::T6 => {
            let mut prm = params.clone();
            if let Some(p) = prm.p {
                prm.exp_moment = Some(exp_moment(p, [&run.reference, &run.truncate])?);
            }
            let d: Vec<f64> = run
                .reference
                .supremum()?
                .iter()
                .zip(run.truncate.supremum()?)
                .map(|(a, b)| (a.exp() - b.exp()).abs())
                .collect();
            let (empirical, stderr) = stats::mean_stderr(&d);
            out.push(Check {
                payoff_id: "abs_exp_supremum_difference".into(),
                empirical,
                stderr,
                report: bounds::evaluate_bound(id, &base_inputs(prm)?),
            });
        }
        BoundId::T7 | BoundId::T8 | BoundId::T9 | BoundId::B6 | BoundId::B7 => {
            let functional = if id == BoundId::T9 { Functional::Supremum } else { Functional::Terminal };
            let d = estimators::empirical_cdf_distance(&run.reference, approx, levels, functional)?;
            out.push(Check {
                payoff_id: match functional {
                    Functional::Terminal => "cdf_terminal".into(),
                    Functional::Supremum => "cdf_supremum".into(),
                },
                empirical: d.sup_distance,
                stderr: d.max_stderr,
                report: bounds::evaluate_bound(id, &base_inputs(params.clone())?),
            });
        }
        BoundId::B1 => {
            let p = PayoffSpec::SupremumLipschitz { f: ScalarFn::Identity, k: 1.0 };
            let (empirical, stderr) = abs_paired(&p, &run.reference, &run.gaussian)?;
            out.push(Check {
                payoff_id: "mean_supremum".into(),
                empirical,
                stderr,
                report: bounds::evaluate_bound(id, &base_inputs(params.clone())?),
            });
        }
        BoundId::R1 => {
            // The sign statement: -E(M - M^ε) <= 0.
            let p = PayoffSpec::SupremumLipschitz { f: ScalarFn::Identity, k: 1.0 };
            let e = estimators::paired_difference(&p, &run.reference, &run.truncate)?;
            let mut report = bounds::evaluate_bound(id, &base_inputs(params.clone())?);
            if report.is_valid() {
                report.value = Some(BoundValue::Number(0.0));
            }
            out.push(Check {
                payoff_id: "negative_mean_supremum_gap".into(),
                empirical: -e.mean,
                stderr: e.stderr,
                report,
            });
        }
        BoundId::T5 | BoundId::B4 | BoundId::S1 => {
            out.push(Check {
                payoff_id: String::new(),
                empirical: f64::NAN,
                stderr: f64::NAN,
                report: bounds::evaluate_bound(id, &base_inputs(params.clone())?),
            });
        }
    }
    Ok(out)
}

fn verify_table(cfg: &StudyConfig, triplet: &GeneratingTriplet) -> Result<(Table, usize)> {
    if cfg.bounds.is_empty() {
        return Err(Error::Config {
            line: None,
            message: "verify study needs a non-empty `bounds` list".into(),
        });
    }
    let mut t = Table::new(
        "verify",
        vec![
            "model", "bound", "eps", "comparison", "payoff_id", "empirical", "stderr", "bound_value", "envelope",
            "margin", "constant_mode", "validity", "n_paths", "seed", "verdict",
        ],
    );
    let payoffs = cfg.payoffs.iter().map(payoff_of).collect::<Result<Vec<_>>>()?;
    let params = cfg.base_params();
    let levels = cfg.levels.points();
    let mut failures = 0;
    for &eps in &cfg.eps {
        let run = simulate_eps(cfg, triplet, eps)?;
        for id in cfg.bound_ids() {
            let approx = if id.is_truncation() { &run.truncate } else { &run.gaussian };
            let comparison = format!("{}-{}", run.reference.config.scheme.label(), approx.config.scheme.label());
            for c in checks_for(id, &run, &payoffs, &params, triplet, &levels)? {
                let value = c.report.numeric().filter(|_| c.report.is_valid());
                // T2 carries the Monte Carlo error of its E f'' input.
                let se = c.stderr.hypot(c.report.input_stderr.unwrap_or(0.0));
                let (envelope, margin, verdict) = match value {
                    Some(v) if c.empirical.is_finite() => {
                        let env = v + ENVELOPE_SE * se;
                        let pass = c.empirical <= env;
                        failures += usize::from(!pass);
                        (Some(env), Some(env - c.empirical), if pass { "PASS" } else { "FAIL" })
                    }
                    _ => (None, None, "SKIP"),
                };
                t.rows.push(vec![
                    triplet.model.clone(),
                    id.code().to_string(),
                    num(eps),
                    comparison.clone(),
                    c.payoff_id,
                    if c.empirical.is_finite() { num(c.empirical) } else { String::new() },
                    if c.stderr.is_finite() { num(se) } else { String::new() },
                    opt_num(value),
                    opt_num(envelope),
                    opt_num(margin),
                    c.report.constant_mode.as_str().to_string(),
                    c.report.validity_summary(),
                    cfg.n_paths.to_string(),
                    cfg.seed.to_string(),
                    verdict.to_string(),
                ]);
            }
        }
    }
    Ok((t, failures))
}

fn rates_tables(cfg: &StudyConfig, triplet: &GeneratingTriplet) -> Result<(Table, Table)> {
    let mut payoffs = cfg.payoffs.iter().map(payoff_of).collect::<Result<Vec<_>>>()?;
    if payoffs.is_empty() {
        payoffs.push(PayoffSpec::SmoothTerminal { f: ScalarFn::Sin });
    }
    let mut points = Table::new(
        "rates-points",
        vec!["model", "payoff_id", "scheme", "eps", "sigma0", "sigma0_beta1", "error", "stderr"],
    );
    // (payoff, scheme) -> (σ₀, σ₀β₁ᵗ, |error|)
    type Series = BTreeMap<(String, String), Vec<(f64, f64, f64)>>;
    let mut series = Series::new();
    for &eps in &cfg.eps {
        let run = simulate_eps(cfg, triplet, eps)?;
        let m = jump_metrics::small_jump_metrics(triplet, eps)?;
        let sb = m.sigma0 * jump_metrics::beta1(m.beta, cfg.t);
        for payoff in &payoffs {
            for scheme in &cfg.schemes {
                let approx = if scheme == "gaussian" { &run.gaussian } else { &run.truncate };
                let e = estimators::paired_difference(payoff, &run.reference, approx)?;
                points.rows.push(vec![
                    triplet.model.clone(),
                    payoff.id(),
                    scheme.clone(),
                    num(eps),
                    num(m.sigma0),
                    num(sb),
                    num(e.mean.abs()),
                    num(e.stderr),
                ]);
                series.entry((payoff.id(), scheme.clone())).or_default().push((m.sigma0, sb, e.mean.abs()));
            }
        }
    }
    let mut fits = Table::new(
        "rates",
        vec!["model", "payoff_id", "scheme", "regressor", "slope", "intercept", "r2", "n_points"],
    );
    for ((payoff, scheme), pts) in &series {
        let err: Vec<f64> = pts.iter().map(|p| p.2).collect();
        for (name, xs) in [
            ("log_sigma0", pts.iter().map(|p| p.0).collect::<Vec<f64>>()),
            ("log_sigma0_beta1", pts.iter().map(|p| p.1).collect()),
        ] {
            let usable = xs.iter().zip(&err).filter(|(x, y)| **x > 0.0 && **y > 0.0).count();
            let fit = stats::log_log_regression(&xs, &err);
            fits.rows.push(vec![
                triplet.model.clone(),
                payoff.clone(),
                scheme.clone(),
                name.to_string(),
                opt_num(fit.map(|f| f.slope)),
                opt_num(fit.map(|f| f.intercept)),
                opt_num(fit.map(|f| f.r2)),
                usable.to_string(),
            ]);
        }
    }
    Ok((points, fits))
}

fn select_eps_table(cfg: &StudyConfig, triplet: &GeneratingTriplet) -> Result<(Table, usize)> {
    if cfg.bounds.is_empty() || cfg.budgets.is_empty() {
        return Err(Error::Config {
            line: None,
            message: "select_eps study needs non-empty `bounds` and `budgets`".into(),
        });
    }
    let mut t = Table::new(
        "select_eps",
        vec!["model", "bound", "budget", "eps", "bound_at_eps", "status", "message"],
    );
    let mut params = cfg.base_params();
    params.k_lip = cfg.payoffs.iter().find_map(|p| p.k).unwrap_or(1.0);
    let range = (cfg.eps_range[0], cfg.eps_range[1]);
    let mut failures = 0;
    for id in cfg.bound_ids() {
        for &budget in &cfg.budgets {
            let (eps, value, status, message) = match bounds::epsilon_for_budget(id, budget, triplet, &params, range) {
                Ok(eps) => {
                    let inputs = BoundInputs::new(triplet, eps, params.clone())?;
                    let v = bounds::evaluate_bound(id, &inputs).numeric();
                    (Some(eps), v, "ok", String::new())
                }
                Err(e @ Error::BudgetUnreachable { .. }) => {
                    failures += 1;
                    (None, None, "unreachable", e.to_string())
                }
                Err(e @ (Error::NonMonotone { .. } | Error::Inapplicable { .. })) => {
                    failures += 1;
                    (None, None, "not_invertible", e.to_string())
                }
                Err(e) => return Err(e),
            };
            t.rows.push(vec![
                triplet.model.clone(),
                id.code().to_string(),
                num(budget),
                opt_num(eps),
                opt_num(value),
                status.to_string(),
                message,
            ]);
        }
    }
    Ok((t, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    const METRICS: &str = r#"
kind = "metrics"
label = "t"
eps = [0.1, 0.05]

[model]
name = "alpha_stable_like"
params = { alpha = 1.0 }
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = StudyConfig::from_toml_str(METRICS).unwrap();
        assert_eq!(cfg.kind, Some(StudyKind::Metrics));
        assert_eq!(cfg.n_steps, 256);
        assert_eq!(cfg.levels.points().len(), 41);
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let text = "kind = \"metrics\"\neps = [0.1,\n[model]\n";
        match StudyConfig::from_toml_str(text) {
            Err(Error::Config { line: Some(l), .. }) => assert!(l >= 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_carry_the_line_of_the_key() {
        let text = METRICS.replace("eps = [0.1, 0.05]", "eps = [0.05, 0.1]");
        match StudyConfig::from_toml_str(&text) {
            Err(Error::Config { line: Some(4), message }) => assert!(message.contains("decreasing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bounds_are_rejected() {
        assert!(StudyConfig::from_toml_str(&format!("{METRICS}\nbogus = 1\n")).is_err());
        let text = METRICS.replace("eps = [0.1, 0.05]", "eps = [0.1]\nbounds = [\"T99\"]");
        assert!(matches!(StudyConfig::from_toml_str(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config { line: None, message: String::new() }), 2);
        assert_eq!(exit_code(&Error::Numerical(String::new())), 3);
        assert_eq!(exit_code(&Error::Verification(String::new())), 4);
    }

    #[test]
    fn table_has_versioned_header() {
        let mut t = Table::new("demo", vec!["a", "b"]);
        t.rows.push(vec!["1".into(), "x,y".into()]);
        let s = String::from_utf8(t.render().unwrap()).unwrap();
        assert_eq!(s, "# smalljump demo schema v1\na,b\n1,\"x,y\"\n");
    }
}
