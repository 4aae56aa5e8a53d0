//! Monte Carlo estimates over path batches: payoff means, paired scheme
//! differences, CDF distances and the mean supremum through the identity
//! `E M_t = ∫₀ᵗ E X_s⁺ / s ds`.

use std::fmt;
use std::io::Write;

use crate::engine::{self, PathBatch, PathConfig, Scheme};
use crate::error::{Error, Result};
use crate::levy_models::{self, GeneratingTriplet};
use crate::quadrature;
use crate::stats;

/// Sample mean with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    /// `sd / √n_paths`; binomial for indicator payoffs.
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub payoff_id: String,
    pub scheme: String,
    pub eps: f64,
}

impl MCEstimate {
    pub const CSV_HEADER: &'static str = "payoff_id,scheme,eps,mean,stderr,n_paths,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{},{}",
            self.payoff_id, self.scheme, self.eps, self.mean, self.stderr, self.n_paths, self.seed
        )
    }

    pub fn write_csv<W: Write>(rows: &[MCEstimate], mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in rows {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

/// Scalar test functions with analytic Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFn {
    Identity,
    Sin,
    Cos,
    Abs,
    /// `(x - strike)⁺`
    Call { strike: f64 },
    /// `(strike - x)⁺`
    Put { strike: f64 },
}

impl ScalarFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ScalarFn::Identity => x,
            ScalarFn::Sin => x.sin(),
            ScalarFn::Cos => x.cos(),
            ScalarFn::Abs => x.abs(),
            ScalarFn::Call { strike } => (x - strike).max(0.0),
            ScalarFn::Put { strike } => (strike - x).max(0.0),
        }
    }

    /// Smallest global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// Lipschitz constant of `f′` for twice differentiable `f`.
    pub fn derivative_lipschitz(&self) -> Option<f64> {
        match self {
            ScalarFn::Identity => Some(0.0),
            ScalarFn::Sin | ScalarFn::Cos => Some(1.0),
            _ => None,
        }
    }

    /// `f″` where `f` is twice differentiable everywhere.
    pub fn second_derivative(&self) -> Option<fn(f64) -> f64> {
        match self {
            ScalarFn::Identity => Some(|_| 0.0),
            ScalarFn::Sin => Some(|x: f64| -x.sin()),
            ScalarFn::Cos => Some(|x: f64| -x.cos()),
            _ => None,
        }
    }

    /// Parses `identity`, `sin`, `cos`, `abs`, `call` and `put`; the last two
    /// take `strike`.
    pub fn parse(name: &str, strike: Option<f64>) -> Result<ScalarFn> {
        let k = strike.unwrap_or(0.0);
        Ok(match name.to_ascii_lowercase().as_str() {
            "identity" | "id" => ScalarFn::Identity,
            "sin" => ScalarFn::Sin,
            "cos" => ScalarFn::Cos,
            "abs" => ScalarFn::Abs,
            "call" => ScalarFn::Call { strike: k },
            "put" => ScalarFn::Put { strike: k },
            other => return Err(Error::InvalidArgument(format!("unknown test function `{other}`"))),
        })
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Identity => write!(f, "identity"),
            ScalarFn::Sin => write!(f, "sin"),
            ScalarFn::Cos => write!(f, "cos"),
            ScalarFn::Abs => write!(f, "abs"),
            ScalarFn::Call { strike } => write!(f, "call({strike})"),
            ScalarFn::Put { strike } => write!(f, "put({strike})"),
        }
    }
}

/// Path functional a CDF is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Terminal,
    Supremum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffSpec {
    /// `f(X_t)` with Lipschitz constant `k`.
    LipschitzTerminal { f: ScalarFn, k: f64 },
    /// `f(X_t)` for a twice differentiable `f`.
    SmoothTerminal { f: ScalarFn },
    /// `f(M_t)` with Lipschitz constant `k`.
    SupremumLipschitz { f: ScalarFn, k: f64 },
    /// `(e^{M_t} - strike)⁺`
    ExpSupremum { strike: f64 },
    /// `1{X_t >= level}`
    IndicatorTerminal { level: f64 },
    /// `1{M_t >= level}`
    IndicatorSupremum { level: f64 },
}

impl PayoffSpec {
    pub fn id(&self) -> String {
        match self {
            PayoffSpec::LipschitzTerminal { f, k } => format!("lipschitz_terminal:{f}:K={k}"),
            PayoffSpec::SmoothTerminal { f } => format!("smooth_terminal:{f}"),
            PayoffSpec::SupremumLipschitz { f, k } => format!("supremum_lipschitz:{f}:K={k}"),
            PayoffSpec::ExpSupremum { strike } => format!("exp_supremum:x={strike}"),
            PayoffSpec::IndicatorTerminal { level } => format!("indicator_terminal:x={level}"),
            PayoffSpec::IndicatorSupremum { level } => format!("indicator_supremum:x={level}"),
        }
    }

    pub fn needs_supremum(&self) -> bool {
        matches!(
            self,
            PayoffSpec::SupremumLipschitz { .. } | PayoffSpec::ExpSupremum { .. } | PayoffSpec::IndicatorSupremum { .. }
        )
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, PayoffSpec::IndicatorTerminal { .. } | PayoffSpec::IndicatorSupremum { .. })
    }

    /// Lipschitz constant carried by the payoff, if any.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            PayoffSpec::LipschitzTerminal { k, .. } | PayoffSpec::SupremumLipschitz { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Rejects a declared `K` below the analytic constant of `f`, or a
    /// smooth payoff whose `f″` is unknown.
    pub fn validate(&self) -> Result<()> {
        let mismatch = |reason: String| {
            Err(Error::PayoffMismatch {
                payoff: self.id(),
                reason,
            })
        };
        match self {
            PayoffSpec::LipschitzTerminal { f, k } | PayoffSpec::SupremumLipschitz { f, k } => {
                if !(*k >= f.lipschitz()) || !k.is_finite() {
                    return mismatch(format!("K = {k} is below the Lipschitz constant {} of {f}", f.lipschitz()));
                }
            }
            PayoffSpec::SmoothTerminal { f } => {
                if f.second_derivative().is_none() {
                    return mismatch(format!("{f} is not twice differentiable"));
                }
            }
            PayoffSpec::ExpSupremum { strike } | PayoffSpec::IndicatorTerminal { level: strike } | PayoffSpec::IndicatorSupremum { level: strike } => {
                if !strike.is_finite() {
                    return mismatch("level must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Payoff of one path.
    #[inline]
    pub fn evaluate(&self, terminal: f64, supremum: f64) -> f64 {
        match *self {
            PayoffSpec::LipschitzTerminal { f, .. } | PayoffSpec::SmoothTerminal { f } => f.eval(terminal),
            PayoffSpec::SupremumLipschitz { f, .. } => f.eval(supremum),
            PayoffSpec::ExpSupremum { strike } => (supremum.exp() - strike).max(0.0),
            PayoffSpec::IndicatorTerminal { level } => (terminal >= level) as u8 as f64,
            PayoffSpec::IndicatorSupremum { level } => (supremum >= level) as u8 as f64,
        }
    }

    /// Builds a payoff from its kind name and parameters as used in study files.
    pub fn from_parts(kind: &str, f: Option<&str>, k: Option<f64>, x: Option<f64>) -> Result<PayoffSpec> {
        let fun = || ScalarFn::parse(f.unwrap_or("identity"), x);
        let level = || {
            x.ok_or_else(|| Error::InvalidArgument(format!("payoff `{kind}` needs a level `x`")))
        };
        let spec = match kind {
            "lipschitz_terminal" => {
                let f = fun()?;
                PayoffSpec::LipschitzTerminal {
                    k: k.unwrap_or(f.lipschitz()),
                    f,
                }
            }
            "smooth_terminal" => PayoffSpec::SmoothTerminal { f: fun()? },
            "supremum_lipschitz" => {
                let f = fun()?;
                PayoffSpec::SupremumLipschitz {
                    k: k.unwrap_or(f.lipschitz()),
                    f,
                }
            }
            "exp_supremum" => PayoffSpec::ExpSupremum { strike: level()? },
            "indicator_terminal" => PayoffSpec::IndicatorTerminal { level: level()? },
            "indicator_supremum" => PayoffSpec::IndicatorSupremum { level: level()? },
            other => return Err(Error::InvalidArgument(format!("unknown payoff kind `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn functionals<'a>(payoff: &PayoffSpec, batch: &'a PathBatch) -> Result<(&'a [f64], Option<&'a [f64]>)> {
    if batch.overflow_count() > 0 {
        return Err(Error::Numerical(format!(
            "{} paths left the finite range",
            batch.overflow_count()
        )));
    }
    let sup = if payoff.needs_supremum() {
        Some(batch.supremum.as_deref().ok_or_else(|| Error::PayoffMismatch {
            payoff: payoff.id(),
            reason: "batch was simulated without record_supremum".into(),
        })?)
    } else {
        None
    };
    Ok((&batch.terminal, sup))
}

fn payoff_values(payoff: &PayoffSpec, batch: &PathBatch) -> Result<Vec<f64>> {
    payoff.validate()?;
    let (term, sup) = functionals(payoff, batch)?;
    let values: Vec<f64> = match sup {
        Some(s) => term.iter().zip(s).map(|(x, m)| payoff.evaluate(*x, *m)).collect(),
        None => term.iter().map(|x| payoff.evaluate(*x, f64::NAN)).collect(),
    };
    // Spot check of K on consecutive path pairs.
    if let (Some(k), PayoffSpec::LipschitzTerminal { .. } | PayoffSpec::SupremumLipschitz { .. }) = (payoff.lipschitz(), payoff) {
        let args = sup.unwrap_or(term);
        for i in 1..args.len().min(10_001) {
            let (dx, df) = ((args[i] - args[i - 1]).abs(), (values[i] - values[i - 1]).abs());
            if df > k * dx * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::PayoffMismatch {
                    payoff: payoff.id(),
                    reason: format!("K = {k} violated on sampled pair ({}, {})", args[i - 1], args[i]),
                });
            }
        }
    }
    Ok(values)
}

fn estimate_from(values: &[f64], binomial: bool, payoff_id: String, config: &PathConfig) -> MCEstimate {
    let (mean, mut stderr) = stats::mean_stderr(values);
    if binomial {
        stderr = (mean * (1.0 - mean) / values.len() as f64).max(0.0).sqrt();
    }
    MCEstimate {
        mean,
        stderr,
        n_paths: values.len(),
        seed: config.seed,
        payoff_id,
        scheme: config.scheme.label(),
        eps: config.eps,
    }
}

/// Sample mean and standard error of the payoff over the batch.
pub fn mc_expectation(payoff: &PayoffSpec, batch: &PathBatch) -> Result<MCEstimate> {
    let values = payoff_values(payoff, batch)?;
    Ok(estimate_from(&values, payoff.is_indicator(), payoff.id(), &batch.config))
}

fn check_paired(a: &PathBatch, b: &PathBatch) -> Result<()> {
    let (ca, cb) = (&a.config, &b.config);
    let same = a.model == b.model
        && ca.t == cb.t
        && ca.n_steps == cb.n_steps
        && ca.eps == cb.eps
        && ca.n_paths == cb.n_paths
        && ca.seed == cb.seed
        && a.len() == b.len();
    if same {
        Ok(())
    } else {
        Err(Error::InvalidConfig("paired batches must differ only in the scheme".into()))
    }
}

/// `E[payoff(a) - payoff(b)]` from path-wise differences of two coupled batches.
pub fn paired_difference(payoff: &PayoffSpec, a: &PathBatch, b: &PathBatch) -> Result<MCEstimate> {
    check_paired(a, b)?;
    let va = payoff_values(payoff, a)?;
    let vb = payoff_values(payoff, b)?;
    let diff: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    let mut est = estimate_from(&diff, false, payoff.id(), &a.config);
    est.scheme = format!("{}-{}", a.config.scheme.label(), b.config.scheme.label());
    Ok(est)
}

/// Simulates both schemes on shared streams and returns the paired difference `a - b`.
pub fn paired_error(
    triplet: &GeneratingTriplet,
    payoff: &PayoffSpec,
    scheme_a: Scheme,
    scheme_b: Scheme,
    config: &PathConfig,
) -> Result<MCEstimate> {
    let mut cfg = config.clone();
    cfg.record_supremum = payoff.needs_supremum();
    let batches = engine::simulate_coupled(triplet, &cfg, &[scheme_a, scheme_b])?;
    paired_difference(payoff, &batches[0], &batches[1])
}

/// Per-level CDF differences `P̂_a[F >= x] - P̂_b[F >= x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfDistance {
    pub levels: Vec<f64>,
    pub differences: Vec<f64>,
    /// `√(p_a(1-p_a)/n_a + p_b(1-p_b)/n_b)` per level.
    pub stderr: Vec<f64>,
    /// Largest `|difference|` over the grid.
    pub sup_distance: f64,
    pub max_stderr: f64,
}

fn exceedance(values: &[f64], levels: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    levels
        .iter()
        .map(|x| {
            let below = sorted.partition_point(|v| v < x);
            (sorted.len() - below) as f64 / n
        })
        .collect()
}

pub fn empirical_cdf_distance(a: &PathBatch, b: &PathBatch, levels: &[f64], functional: Functional) -> Result<CdfDistance> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("level grid is empty".into()));
    }
    if a.len() != b.len() {
        return Err(Error::InvalidArgument("batches must have the same number of paths".into()));
    }
    let pick = |batch: &'_ PathBatch| -> Result<Vec<f64>> {
        Ok(match functional {
            Functional::Terminal => batch.terminal.clone(),
            Functional::Supremum => batch.supremum()?.to_vec(),
        })
    };
    let pa = exceedance(&pick(a)?, levels);
    let pb = exceedance(&pick(b)?, levels);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let differences: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x - y).collect();
    let stderr: Vec<f64> = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| (x * (1.0 - x) / na + y * (1.0 - y) / nb).sqrt())
        .collect();
    Ok(CdfDistance {
        levels: levels.to_vec(),
        sup_distance: differences.iter().fold(0.0, |m, d| m.max(d.abs())),
        max_stderr: stderr.iter().fold(0.0, |m, s| m.max(*s)),
        differences,
        stderr,
    })
}

/// `E f″(X_t)` over the batch terminal values.
pub fn second_derivative_expectation<F: Fn(f64) -> f64>(f2: F, batch: &PathBatch) -> Result<MCEstimate> {
    if batch.overflow_count() > 0 {
        return Err(Error::Numerical("paths left the finite range".into()));
    }
    let values: Vec<f64> = batch.terminal.iter().map(|x| f2(*x)).collect();
    Ok(estimate_from(&values, false, "second_derivative".into(), &batch.config))
}

/// Controls of [`spitzer_mean_supremum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpitzerOptions {
    /// Truncation level of the scheme.
    pub eps: f64,
    pub seed: u64,
    /// Paths per node before any doubling.
    pub initial_paths: usize,
    pub max_paths_per_node: usize,
    /// Target of `stderr / value`.
    pub rel_tol: f64,
    pub workers: usize,
}

impl Default for SpitzerOptions {
    fn default() -> Self {
        SpitzerOptions {
            eps: 1.0,
            seed: 0,
            initial_paths: 1 << 12,
            max_paths_per_node: 1 << 22,
            rel_tol: 0.005,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpitzerNode {
    pub s: f64,
    /// Quadrature weight times the Jacobian, so the node adds `coefficient·E X_s⁺`.
    pub coefficient: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpitzerEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Whether `stderr <= rel_tol·value` was reached within the path cap.
    pub converged: bool,
    pub nodes: Vec<SpitzerNode>,
}

/// Node seeds are spread by an odd multiplier so node streams never share a key.
fn node_seed(seed: u64, node: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul((node as u64).wrapping_add(1))
}

fn positive_part_mean(triplet: &GeneratingTriplet, scheme: Scheme, s: f64, n: usize, seed: u64, opts: &SpitzerOptions) -> Result<(f64, f64)> {
    let mut cfg = PathConfig::new(s, 1, opts.eps, scheme, n, seed);
    cfg.record_supremum = false;
    cfg.workers = opts.workers;
    let batch = engine::simulate_paths(triplet, &cfg)?;
    if batch.overflow_count() > 0 {
        return Err(Error::Numerical("paths left the finite range".into()));
    }
    let v: Vec<f64> = batch.terminal.iter().map(|x| x.max(0.0)).collect();
    Ok(stats::mean_stderr(&v))
}

/// `E M_t = ∫₀ᵗ E X_s⁺ / s ds` with `s = u²`, Gauss–Legendre in `u` and
/// Monte Carlo at each node. Node path counts are doubled, largest variance
/// contribution first, until the propagated stderr is within `rel_tol`.
pub fn spitzer_mean_supremum(
    triplet: &GeneratingTriplet,
    scheme: Scheme,
    t: f64,
    quad_nodes: usize,
    opts: &SpitzerOptions,
) -> Result<SpitzerEstimate> {
    if quad_nodes < 8 {
        return Err(Error::InvalidArgument(format!("quad_nodes must be >= 8, got {quad_nodes}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("t must be > 0, got {t}")));
    }
    if opts.initial_paths < 2 || opts.max_paths_per_node < opts.initial_paths {
        return Err(Error::InvalidArgument("need 2 <= initial_paths <= max_paths_per_node".into()));
    }
    let big = levy_models::band_moment(&triplet.measure, 1, 1.0, f64::INFINITY, true);
    if !matches!(big, Ok(v) if v.is_finite()) {
        return Err(Error::Divergent("E|X_t| is infinite: the jump measure has no first moment beyond 1".into()));
    }
    let (x, w) = quadrature::gauss_legendre(quad_nodes);
    let root = t.sqrt();
    let mut nodes = Vec::with_capacity(quad_nodes);
    for (i, (xi, wi)) in x.iter().zip(&w).enumerate() {
        let u = 0.5 * root * (xi + 1.0);
        let s = u * u;
        let (mean, stderr) = positive_part_mean(triplet, scheme, s, opts.initial_paths, node_seed(opts.seed, i), opts)?;
        nodes.push(SpitzerNode {
            s,
            // ds/s = 2 du/u and du = (√t/2)·dx.
            coefficient: 0.5 * root * wi * 2.0 / u,
            mean,
            stderr,
            n_paths: opts.initial_paths,
        });
    }
    let total = |nodes: &[SpitzerNode]| {
        let value = stats::compensated_sum(nodes.iter().map(|n| n.coefficient * n.mean));
        let var = stats::compensated_sum(nodes.iter().map(|n| (n.coefficient * n.stderr).powi(2)));
        (value, var.sqrt())
    };
    let (mut value, mut stderr) = total(&nodes);
    let mut converged = stderr <= opts.rel_tol * value.abs();
    while !converged {
        let pick = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.n_paths * 2 <= opts.max_paths_per_node)
            .max_by(|a, b| {
                let va = (a.1.coefficient * a.1.stderr).powi(2);
                let vb = (b.1.coefficient * b.1.stderr).powi(2);
                va.total_cmp(&vb).then(b.0.cmp(&a.0))
            })
            .map(|(i, _)| i);
        let Some(i) = pick else { break };
        let n = nodes[i].n_paths * 2;
        // Same node seed: the first half of the paths is reused exactly.
        let (mean, se) = positive_part_mean(triplet, scheme, nodes[i].s, n, node_seed(opts.seed, i), opts)?;
        nodes[i].mean = mean;
        nodes[i].stderr = se;
        nodes[i].n_paths = n;
        (value, stderr) = total(&nodes);
        if !value.is_finite() {
            return Err(Error::Divergent("integrand estimate is not finite".into()));
        }
        converged = stderr <= opts.rel_tol * value.abs();
    }
    check_near_zero(triplet, scheme, &nodes, opts)?;
    Ok(SpitzerEstimate {
        value,
        stderr,
        converged,
        nodes,
    })
}

/// `g(u) = E X_{u²}⁺ / u` must not blow up like `1/u` as `u → 0`; probes two
/// points below the first node and rejects growth faster than `u^{-0.9}`.
fn check_near_zero(triplet: &GeneratingTriplet, scheme: Scheme, nodes: &[SpitzerNode], opts: &SpitzerOptions) -> Result<()> {
    let u1 = nodes[0].s.sqrt();
    let g1 = nodes[0].mean / u1;
    let mut prev = (g1, nodes[0].stderr / u1);
    let mut steep = 0;
    for (k, shrink) in [4.0, 16.0].into_iter().enumerate() {
        let u = u1 / shrink;
        let (m, se) = positive_part_mean(triplet, scheme, u * u, opts.initial_paths, node_seed(opts.seed, usize::MAX - k), opts)?;
        let g = (m / u, se / u);
        if !g.0.is_finite() {
            return Err(Error::Divergent("integrand is not finite near s = 0".into()));
        }
        let growth = 4f64.powf(0.9);
        if g.0 - 4.0 * g.1 > growth * (prev.0 + 4.0 * prev.1) && prev.0 > 0.0 {
            steep += 1;
        }
        prev = g;
    }
    if steep == 2 {
        return Err(Error::Divergent(
            "E X_s⁺ / s grows like 1/s near 0; the integral does not settle".into(),
        ));
    }
    Ok(())
}
