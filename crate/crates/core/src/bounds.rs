//! Error bounds for the two small-jump schemes, evaluated as numbers with
//! their preconditions, and the inversion `budget -> ε`.
//!
//! `T*` bounds compare `X` with the truncated process `X^ε`, `B*` bounds
//! compare `X` with the Gaussian substitute `X̂^ε`. `S1` and `R1` are rate
//! statements without a constant.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::jump_metrics::{self, SmallJumpMetrics};
use crate::levy_models::{self, ExpTail, GeneratingTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundId {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    S1,
    R1,
}

impl BoundId {
    pub const ALL: [BoundId; 18] = [
        BoundId::T1,
        BoundId::T2,
        BoundId::T3,
        BoundId::T4,
        BoundId::T5,
        BoundId::T6,
        BoundId::T7,
        BoundId::T8,
        BoundId::T9,
        BoundId::B1,
        BoundId::B2,
        BoundId::B3,
        BoundId::B4,
        BoundId::B5,
        BoundId::B6,
        BoundId::B7,
        BoundId::S1,
        BoundId::R1,
    ];

    pub fn code(self) -> &'static str {
        match self {
            BoundId::T1 => "T1",
            BoundId::T2 => "T2",
            BoundId::T3 => "T3",
            BoundId::T4 => "T4",
            BoundId::T5 => "T5",
            BoundId::T6 => "T6",
            BoundId::T7 => "T7",
            BoundId::T8 => "T8",
            BoundId::T9 => "T9",
            BoundId::B1 => "B1",
            BoundId::B2 => "B2",
            BoundId::B3 => "B3",
            BoundId::B4 => "B4",
            BoundId::B5 => "B5",
            BoundId::B6 => "B6",
            BoundId::B7 => "B7",
            BoundId::S1 => "S1",
            BoundId::R1 => "R1",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundId::T1 => "lipschitz_fixed_time_trunc",
            BoundId::T2 => "smooth_second_order_trunc",
            BoundId::T3 => "lipschitz_derivative_trunc",
            BoundId::T4 => "supremum_lipschitz_trunc",
            BoundId::T5 => "optimal_stopping_trunc",
            BoundId::T6 => "exp_supremum_trunc",
            BoundId::T7 => "cdf_fixed_time_trunc_gauss",
            BoundId::T8 => "cdf_fixed_time_trunc_density",
            BoundId::T9 => "cdf_supremum_trunc_density",
            BoundId::B1 => "mean_supremum_brownian",
            BoundId::B2 => "supremum_lipschitz_brownian",
            BoundId::B3 => "fixed_time_lipschitz_brownian",
            BoundId::B4 => "optimal_stopping_brownian",
            BoundId::B5 => "exp_supremum_brownian",
            BoundId::B6 => "cdf_fixed_time_brownian_gauss",
            BoundId::B7 => "cdf_brownian_density",
            BoundId::S1 => "smooth_rate_brownian",
            BoundId::R1 => "supremum_mean_rate_trunc",
        }
    }

    /// The inequality the bound certifies.
    pub fn statement(self) -> &'static str {
        match self {
            BoundId::T1 => "|E f(X_t) - E f(X^ε_t)| <= K √t σ(ε), f K-Lipschitz",
            BoundId::T2 => "E f(X_t) - E f(X^ε_t) = σ(ε)² t/2 E f''(X^ε_t) + o(σ₀(ε)²)",
            BoundId::T3 => "|E f(X_t) - E f(X^ε_t)| <= C σ(ε)² t/2, f' C-Lipschitz",
            BoundId::T4 => "|E f(M_t) - E f(M^ε_t)| <= 2K √t σ(ε), f K-Lipschitz",
            BoundId::T5 => "|sup_τ E f(τ,X_τ) - sup_τ E f(τ,X^ε_τ)| <= 2K √t σ(ε)",
            BoundId::T6 => "E|e^{M_t} - e^{M^ε_t}| <= p K_{q,t}^{1/q} (E e^{pM_t} + E e^{pM^ε_t})^{1/p} σ₀(ε)",
            BoundId::T7 => "sup_x |P[X_t >= x] - P[X^ε_t >= x]| <= σ(ε)/(√(2π) b)",
            BoundId::T8 => "|P[X_t >= x] - P[X^ε_t >= x]| <= 2 max(K_x, K_{p,t}) σ₀(ε)^{p/(p+1)}, p = 1/q - 1",
            BoundId::T9 => "|P[M_t >= x] - P[M^ε_t >= x]| <= 2 max(K_x, K_{p,t}(p/(p-1))^p) σ₀(ε)^{p/(p+1)}, p = 1/q - 1",
            BoundId::B1 => "|E M_t - E M̂^ε_t| <= 33 σ(ε) ρ(ε) (1 + ln(√t/(2ρ(ε))))",
            BoundId::B2 => "|E f(M_t) - E f(M̂^ε_t)| <= K max(C_α, 8t) σ₀(ε) β₁ᵗ(ε)",
            BoundId::B3 => "|E f(X_t) - E f(X̂^ε_t)| <= K max(C_α, 8t) σ₀(ε) β₁ᵗ(ε)",
            BoundId::B4 => "|sup_τ E f(τ,X_τ) - sup_τ E f(τ,X̂^ε_τ)| <= 4K √t σ(ε)",
            BoundId::B5 => "|E(e^{M_t} - x)⁺ - E(e^{M̂^ε_t} - x)⁺| <= C σ₀(ε) (β_{p/(p-1),θ}ᵗ(ε))^{1-1/p}",
            BoundId::B6 => "sup_x |P[X_t >= x] - P[X̂^ε_t >= x]| <= max(C_α, 8t) σ₀(ε) β₁ᵗ(ε)/(b √(2πt))",
            BoundId::B7 => "|P[X_t >= x] - P[X̂^ε_t >= x]| <= 2 max(K_x, C) σ₀(ε)^{p/(p+1)} (β_{p,θ}ᵗ(ε))^{1/(p+1)}, p = 1/q - 1",
            BoundId::S1 => "E f(X_t) - E f(X̂^ε_t) = o(σ₀(ε)²) for smooth f",
            BoundId::R1 => "0 <= E(M_t - M^ε_t) = o(σ(ε))",
        }
    }

    /// `true` for bounds that compare against the truncated process.
    pub fn is_truncation(self) -> bool {
        self.code().starts_with('T') || self == BoundId::R1
    }
}

impl fmt::Display for BoundId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for BoundId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundId::ALL
            .into_iter()
            .find(|id| id.code().eq_ignore_ascii_case(s) || id.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown bound `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantMode {
    /// Every constant comes from a tracked formula.
    Explicit,
    /// An unspecified constant was fitted from an empirical run.
    Calibrated,
    /// An unspecified constant was set to 1.
    Unit,
}

impl ConstantMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstantMode::Explicit => "explicit",
            ConstantMode::Calibrated => "calibrated",
            ConstantMode::Unit => "unit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundValue {
    Number(f64),
    /// Rate statement without a usable constant.
    Shape(String),
}

/// Caller-side parameters of the bounds. Unused fields are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundParams {
    pub t: f64,
    /// Lipschitz constant `K` of the payoff.
    pub k_lip: f64,
    /// Lipschitz constant `C` of `f'`.
    pub c_lipderiv: f64,
    /// Exponential-moment order `p > 1`.
    pub p: Option<f64>,
    /// CDF exponent parameter.
    pub q: Option<f64>,
    pub theta: f64,
    /// Local density bound near the CDF level.
    pub k_x: Option<f64>,
    /// `(mean, stderr)` of an estimate of `E f''(X^ε_t)`.
    pub efpp: Option<(f64, f64)>,
    /// Estimate of `E e^{pM_t} + E e^{pM^ε_t}`.
    pub exp_moment: Option<f64>,
    /// Fitted value for the unspecified constant of `B5`/`B7`.
    pub calibration: Option<f64>,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            t: 1.0,
            k_lip: 1.0,
            c_lipderiv: 1.0,
            p: None,
            q: None,
            theta: 0.5,
            k_x: None,
            efpp: None,
            exp_moment: None,
            calibration: None,
        }
    }
}

/// Everything a bound needs at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub metrics: SmallJumpMetrics,
    /// Gaussian volatility of the model.
    pub b: f64,
    pub params: BoundParams,
    /// `∫_{x>1} e^{px} ν(dx)` when `p` was given and the measure is known.
    pub exp_tail: Option<ExpTail>,
    /// `E|X_t| < ∞`.
    pub integrable: bool,
}

impl BoundInputs {
    pub fn new(triplet: &GeneratingTriplet, eps: f64, params: BoundParams) -> Result<Self> {
        let metrics = jump_metrics::small_jump_metrics(triplet, eps)?;
        let exp_tail = match params.p {
            Some(p) if p > 0.0 => Some(levy_models::exp_tail_integral(&triplet.measure, p)?),
            _ => None,
        };
        let big = levy_models::band_moment(&triplet.measure, 1, 1.0, f64::INFINITY, true);
        let integrable = big.map(|v| v.is_finite()).unwrap_or(false);
        Ok(BoundInputs {
            metrics,
            b: triplet.b,
            params,
            exp_tail,
            integrable,
        })
    }

    /// Inputs from precomputed metrics; exponential-moment gating is then unknown.
    pub fn from_metrics(metrics: SmallJumpMetrics, b: f64, params: BoundParams) -> Self {
        BoundInputs {
            metrics,
            b,
            params,
            exp_tail: None,
            integrable: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub description: String,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound: BoundId,
    pub eps: f64,
    /// Present iff every condition is satisfied.
    pub value: Option<BoundValue>,
    /// Value of the ε-dependent factor with unit constant (`B5`).
    pub shape_value: Option<f64>,
    pub constant_mode: ConstantMode,
    pub validity: Vec<Condition>,
    pub warnings: Vec<String>,
    pub statement: &'static str,
    /// Propagated Monte Carlo error of a stochastic input (`T2`).
    pub input_stderr: Option<f64>,
}

impl BoundReport {
    pub fn is_valid(&self) -> bool {
        self.validity.iter().all(|c| c.satisfied)
    }

    pub fn numeric(&self) -> Option<f64> {
        match self.value {
            Some(BoundValue::Number(v)) => Some(v),
            _ => None,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        self.validity
            .iter()
            .filter(|c| !c.satisfied)
            .map(|c| c.description.clone())
            .collect()
    }

    /// Numeric value, or `Inapplicable` listing the violated conditions.
    pub fn require_value(&self) -> Result<f64> {
        match (&self.value, self.is_valid()) {
            (Some(BoundValue::Number(v)), true) => Ok(*v),
            (_, false) => Err(Error::Inapplicable {
                bound: self.bound.code().to_string(),
                violations: self.violations(),
            }),
            (_, true) => Err(Error::Inapplicable {
                bound: self.bound.code().to_string(),
                violations: vec!["bound is shape-only".into()],
            }),
        }
    }

    /// `ok` or the violated conditions separated by `;`.
    pub fn validity_summary(&self) -> String {
        if self.is_valid() {
            "ok".to_string()
        } else {
            self.violations().join(";")
        }
    }
}

/// `C_α = 3 √((1/α)(1 - ln(1-8α)/(2 ln 3)))` for `α ∈ (0, 1/8)`.
pub fn c_alpha(alpha: f64) -> f64 {
    3.0 * ((1.0 - (1.0 - 8.0 * alpha).ln() / (2.0 * 3f64.ln())) / alpha).sqrt()
}

/// `(α*, C_{α*})` minimising [`c_alpha`] by golden-section search.
pub fn c_alpha_min() -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-6, 0.125 - 1e-9);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (c_alpha(c), c_alpha(d));
    while b - a > 1e-13 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = c_alpha(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = c_alpha(d);
        }
    }
    let alpha = 0.5 * (a + b);
    (alpha, c_alpha(alpha))
}

/// `max(C_α*, 8t)`.
pub fn embedding_constant(t: f64) -> f64 {
    c_alpha_min().1.max(8.0 * t)
}

struct Check {
    conds: Vec<Condition>,
}

impl Check {
    fn new() -> Self {
        Check { conds: Vec::new() }
    }

    fn req(&mut self, ok: bool, description: impl Into<String>) {
        self.conds.push(Condition {
            description: description.into(),
            satisfied: ok,
        });
    }

    fn ok(&self) -> bool {
        self.conds.iter().all(|c| c.satisfied)
    }
}

/// Evaluates one bound. Violated preconditions leave `value` empty.
pub fn evaluate_bound(id: BoundId, inputs: &BoundInputs) -> BoundReport {
    let m = &inputs.metrics;
    let p = &inputs.params;
    let t = p.t;
    let (sigma, sigma0) = (m.sigma, m.sigma0);
    let mut chk = Check::new();
    let mut warnings = Vec::new();
    let mut mode = ConstantMode::Explicit;
    let mut shape_value = None;
    let mut input_stderr = None;

    chk.req(t > 0.0 && t.is_finite(), "t > 0 required");
    let needs_infinite = matches!(
        id,
        BoundId::T2
            | BoundId::B1
            | BoundId::B2
            | BoundId::B3
            | BoundId::B4
            | BoundId::B5
            | BoundId::B6
            | BoundId::B7
            | BoundId::S1
            | BoundId::R1
    );
    if needs_infinite {
        chk.req(m.infinite_activity, "infinite-activity measure required");
    }
    if matches!(id, BoundId::B1 | BoundId::B2 | BoundId::B3 | BoundId::R1) {
        chk.req(inputs.integrable, "integrable process required");
    }
    if matches!(
        id,
        BoundId::T1 | BoundId::T4 | BoundId::T5 | BoundId::B2 | BoundId::B3 | BoundId::B4
    ) {
        chk.req(p.k_lip >= 0.0 && p.k_lip.is_finite(), "Lipschitz constant K >= 0 required");
    }
    let sqrt_t = t.max(0.0).sqrt();

    let value: Option<BoundValue> = match id {
        BoundId::T1 => Some(BoundValue::Number(p.k_lip * sqrt_t * sigma)),
        BoundId::T2 => {
            chk.req(p.efpp.is_some(), "estimate of E f''(X^ε_t) required");
            warnings.push("remainder o(σ₀²) not included".to_string());
            p.efpp.map(|(mean, se)| {
                let scale = sigma * sigma * t / 2.0;
                input_stderr = Some(scale * se);
                BoundValue::Number(scale * mean.abs())
            })
        }
        BoundId::T3 => {
            chk.req(p.c_lipderiv >= 0.0, "Lipschitz constant C of f' >= 0 required");
            Some(BoundValue::Number(p.c_lipderiv * sigma * sigma * t / 2.0))
        }
        BoundId::T4 | BoundId::T5 => Some(BoundValue::Number(2.0 * p.k_lip * sqrt_t * sigma)),
        BoundId::T6 => {
            let pp = p.p.unwrap_or(f64::NAN);
            chk.req(pp > 1.0, "p > 1 required");
            chk.req(
                matches!(inputs.exp_tail, Some(ExpTail::Finite(_))),
                "∫_{x>1} e^{px} ν(dx) < ∞ required",
            );
            chk.req(
                p.exp_moment.is_some_and(|e| e > 0.0 && e.is_finite()),
                "estimate of E e^{pM_t} + E e^{pM^ε_t} required",
            );
            if chk.ok() {
                let q = pp / (pp - 1.0);
                match jump_metrics::moment_bound_constant(q, t) {
                    Ok(kq) => {
                        let em = p.exp_moment.unwrap_or(0.0);
                        Some(BoundValue::Number(pp * kq.powf(1.0 / q) * em.powf(1.0 / pp) * sigma0))
                    }
                    Err(e) => {
                        chk.req(false, format!("conjugate exponent: {e}"));
                        None
                    }
                }
            } else {
                None
            }
        }
        BoundId::T7 => {
            chk.req(inputs.b > 0.0, "b > 0 required");
            Some(BoundValue::Number(sigma / ((2.0 * PI).sqrt() * inputs.b)))
        }
        BoundId::T8 | BoundId::T9 => {
            let q = p.q.unwrap_or(f64::NAN);
            chk.req(q > 0.0 && q < 1.0, "q in (0, 1) required");
            let pe = 1.0 / q - 1.0;
            if id == BoundId::T9 {
                chk.req(pe > 1.0, "p = 1/q - 1 > 1 (q < 1/2) required for the maximal inequality");
            }
            chk.req(p.k_x.is_some_and(|k| k >= 0.0), "local density bound K_x required");
            if chk.ok() {
                match jump_metrics::moment_bound_constant(pe, t) {
                    Ok(kp) => {
                        let kp = if id == BoundId::T9 {
                            kp * (pe / (pe - 1.0)).powf(pe)
                        } else {
                            kp
                        };
                        let c = p.k_x.unwrap_or(0.0).max(kp);
                        Some(BoundValue::Number(2.0 * c * sigma0.powf(pe / (pe + 1.0))))
                    }
                    Err(e) => {
                        chk.req(false, format!("moment order p = {pe}: {e}"));
                        None
                    }
                }
            } else {
                None
            }
        }
        BoundId::B1 => {
            chk.req(m.rho > 0.0, "ρ(ε) > 0 required");
            let log_term = (sqrt_t / (2.0 * m.rho)).ln();
            if log_term < 0.0 {
                warnings.push(format!("log term ln(√t/(2ρ)) = {log_term:.6} is negative"));
            }
            let factor = 1.0 + log_term;
            if m.rho > 0.0 {
                chk.req(factor > 0.0, "1 + ln(√t/(2ρ)) > 0 required for a non-negative bound");
            }
            Some(BoundValue::Number(33.0 * sigma * m.rho * factor))
        }
        BoundId::B2 | BoundId::B3 => Some(BoundValue::Number(
            p.k_lip * embedding_constant(t) * sigma0 * jump_metrics::beta1(m.beta, t),
        )),
        BoundId::B4 => Some(BoundValue::Number(4.0 * p.k_lip * sqrt_t * sigma)),
        BoundId::B5 => {
            let pp = p.p.unwrap_or(f64::NAN);
            chk.req(pp > 1.0, "p > 1 required");
            chk.req(p.theta > 0.0 && p.theta < 1.0, "θ in (0, 1) required");
            chk.req(
                matches!(inputs.exp_tail, Some(ExpTail::Finite(_))),
                "∫_{x>1} e^{px} ν(dx) < ∞ required",
            );
            if chk.ok() {
                let prof = jump_metrics::beta_p_theta(m.beta, t, pp / (pp - 1.0), p.theta);
                let shape = sigma0 * prof.powf(1.0 - 1.0 / pp);
                shape_value = Some(shape);
                match p.calibration {
                    Some(c) => {
                        mode = ConstantMode::Calibrated;
                        Some(BoundValue::Number(c * shape))
                    }
                    None => {
                        mode = ConstantMode::Unit;
                        Some(BoundValue::Shape(format!("C·σ₀·(β_{{p/(p-1),θ}}ᵗ)^{{1-1/p}} = C·{shape:.6e}")))
                    }
                }
            } else {
                mode = if p.calibration.is_some() {
                    ConstantMode::Calibrated
                } else {
                    ConstantMode::Unit
                };
                None
            }
        }
        BoundId::B6 => {
            chk.req(inputs.b > 0.0, "b > 0 required");
            let denom = inputs.b * (2.0 * PI * t).sqrt();
            Some(BoundValue::Number(
                embedding_constant(t) * sigma0 * jump_metrics::beta1(m.beta, t) / denom,
            ))
        }
        BoundId::B7 => {
            let q = p.q.unwrap_or(f64::NAN);
            chk.req(q > 0.0 && q <= 0.5, "q in (0, 1/2] required");
            chk.req(p.theta > 0.0 && p.theta < 1.0, "θ in (0, 1) required");
            chk.req(p.k_x.is_some_and(|k| k >= 0.0), "local density bound K_x required");
            mode = if p.calibration.is_some() {
                ConstantMode::Calibrated
            } else {
                ConstantMode::Unit
            };
            if chk.ok() {
                let pe = 1.0 / q - 1.0;
                let c = p.calibration.unwrap_or(1.0);
                let prof = jump_metrics::beta_p_theta(m.beta, t, pe, p.theta);
                let shape = sigma0.powf(pe / (pe + 1.0)) * prof.powf(1.0 / (pe + 1.0));
                shape_value = Some(shape);
                Some(BoundValue::Number(2.0 * p.k_x.unwrap_or(0.0).max(c) * shape))
            } else {
                None
            }
        }
        BoundId::S1 => {
            mode = ConstantMode::Unit;
            Some(BoundValue::Shape("o(σ₀(ε)²)".into()))
        }
        BoundId::R1 => {
            mode = ConstantMode::Unit;
            Some(BoundValue::Shape("sign >= 0, o(σ(ε))".into()))
        }
    };

    let value = match value {
        Some(BoundValue::Number(v)) if chk.ok() && !v.is_finite() => {
            chk.req(false, format!("non-finite value {v}"));
            None
        }
        v if chk.ok() => v,
        _ => None,
    };
    BoundReport {
        bound: id,
        eps: m.eps,
        value,
        shape_value,
        constant_mode: mode,
        validity: chk.conds,
        warnings,
        statement: id.statement(),
        input_stderr,
    }
}

/// Constant that makes a unit-constant bound equal an empirical error.
pub fn calibrate(id: BoundId, inputs: &BoundInputs, empirical: f64) -> Result<f64> {
    let mut probe = inputs.clone();
    probe.params.calibration = None;
    let report = evaluate_bound(id, &probe);
    let shape = match (id, report.shape_value) {
        (BoundId::B5 | BoundId::B7, Some(s)) if s > 0.0 => s,
        _ => {
            return Err(Error::Inapplicable {
                bound: id.code().to_string(),
                violations: if report.is_valid() {
                    vec!["only B5 and B7 carry an unspecified constant".into()]
                } else {
                    report.violations()
                },
            })
        }
    };
    let factor = if id == BoundId::B7 { 2.0 } else { 1.0 };
    Ok(empirical.abs() / (factor * shape))
}

fn bound_at(id: BoundId, triplet: &GeneratingTriplet, params: &BoundParams, eps: f64) -> Result<f64> {
    let inputs = BoundInputs::new(triplet, eps, params.clone())?;
    evaluate_bound(id, &inputs).require_value()
}

/// Grid size for the monotonicity check of [`epsilon_for_budget`].
const MONOTONE_GRID: usize = 24;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Largest ε in `[lo, hi]` with `bound(ε) <= budget`, to relative 1e-4.
pub fn epsilon_for_budget(
    id: BoundId,
    budget: f64,
    triplet: &GeneratingTriplet,
    params: &BoundParams,
    range: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = range;
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument(format!("budget must be > 0, got {budget}")));
    }
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps range must satisfy 0 < lo < hi <= 1, got ({lo}, {hi})"
        )));
    }
    let grid = log_grid(lo, hi, MONOTONE_GRID);
    let values = grid
        .iter()
        .map(|&e| bound_at(id, triplet, params, e))
        .collect::<Result<Vec<f64>>>()?;
    for i in 1..grid.len() {
        if values[i] < values[i - 1] * (1.0 - 1e-9) {
            return Err(Error::NonMonotone {
                bound: id.code().to_string(),
                eps_a: grid[i - 1],
                value_a: values[i - 1],
                eps_b: grid[i],
                value_b: values[i],
            });
        }
    }
    if values[0] > budget {
        return Err(Error::BudgetUnreachable {
            budget,
            lo,
            hi,
            min_value: values[0],
        });
    }
    if values[grid.len() - 1] <= budget {
        return Ok(hi);
    }
    let k = values.iter().rposition(|v| *v <= budget).unwrap_or(0);
    let (mut a, mut b) = (grid[k], grid[k + 1]);
    while b / a > 1.0 + 1e-4 {
        let mid = (a * b).sqrt();
        if bound_at(id, triplet, params, mid)? <= budget {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

/// Largest grid ε below which `B2/T4 < 1` at every grid point; `None` if
/// the ratio never drops below 1 on the grid.
pub fn dominance_threshold(
    triplet: &GeneratingTriplet,
    params: &BoundParams,
    range: (f64, f64),
    n: usize,
) -> Result<Option<f64>> {
    let grid = log_grid(range.0, range.1, n.max(2));
    let mut threshold = None;
    for &eps in &grid {
        let inputs = BoundInputs::new(triplet, eps, params.clone())?;
        let b2 = evaluate_bound(BoundId::B2, &inputs).require_value()?;
        let t4 = evaluate_bound(BoundId::T4, &inputs).require_value()?;
        if b2 < t4 {
            threshold = Some(eps);
        } else {
            break;
        }
    }
    Ok(threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::make_model;

    fn stable1() -> GeneratingTriplet {
        make_model("alpha_stable_like", &[("alpha", 1.0)]).unwrap()
    }

    fn inputs(triplet: &GeneratingTriplet, eps: f64, params: BoundParams) -> BoundInputs {
        BoundInputs::new(triplet, eps, params).unwrap()
    }

    #[test]
    fn t4_closed_form() {
        let r = evaluate_bound(BoundId::T4, &inputs(&stable1(), 0.1, BoundParams::default()));
        assert!((r.require_value().unwrap() - 2.0 * 0.2f64.sqrt()).abs() < 1e-9);
        assert_eq!(r.constant_mode, ConstantMode::Explicit);
    }

    #[test]
    fn b1_hand_value() {
        let r = evaluate_bound(BoundId::B1, &inputs(&stable1(), 0.1, BoundParams::default()));
        // σρ = 0.01/0.2 = 0.05, ρ = 0.05/√0.2
        let rho = 0.05 / 0.2f64.sqrt();
        let expected = 33.0 * 0.05 * (1.0 + (1.0 / (2.0 * rho)).ln());
        assert!((r.require_value().unwrap() - expected).abs() < 1e-8);
        assert!((expected - 4.1216).abs() < 1e-3);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn t7_requires_positive_b() {
        let r = evaluate_bound(BoundId::T7, &inputs(&stable1(), 0.1, BoundParams::default()));
        assert!(r.value.is_none());
        assert_eq!(r.violations(), vec!["b > 0 required".to_string()]);
        assert!(matches!(r.require_value(), Err(Error::Inapplicable { .. })));
    }

    #[test]
    fn truncation_bounds_vanish_under_the_support() {
        let u = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1), ("center", 0.5)]).unwrap();
        let inp = inputs(&u, 0.1, BoundParams::default());
        for id in [BoundId::T1, BoundId::T3, BoundId::T4, BoundId::T5] {
            assert_eq!(evaluate_bound(id, &inp).require_value().unwrap(), 0.0, "{id}");
        }
        assert!(evaluate_bound(BoundId::B2, &inp).value.is_none());
    }

    #[test]
    fn c_alpha_minimum_is_stable() {
        let (a1, c1) = c_alpha_min();
        let (a2, c2) = c_alpha_min();
        assert_eq!(c1, c2);
        assert!((a1 - a2).abs() < 1e-10);
        assert!(a1 > 0.0 && a1 < 0.125);
        // Coarse independent scan.
        let scan = (1..12_500)
            .map(|i| c_alpha(i as f64 * 1e-5))
            .fold(f64::INFINITY, f64::min);
        assert!(c1 <= scan + 1e-9 && scan - c1 < 1e-6, "{c1} vs {scan}");
    }

    #[test]
    fn t4_budget_inversion() {
        let eps = epsilon_for_budget(BoundId::T4, 0.09, &stable1(), &BoundParams::default(), (1e-6, 1.0)).unwrap();
        assert!((eps / 1.0125e-3 - 1.0).abs() < 2e-4, "{eps}");
        let slack = epsilon_for_budget(BoundId::T4, 10.0, &stable1(), &BoundParams::default(), (1e-6, 0.5)).unwrap();
        assert_eq!(slack, 0.5);
        assert!(matches!(
            epsilon_for_budget(BoundId::T4, 1e-6, &stable1(), &BoundParams::default(), (1e-4, 0.5)),
            Err(Error::BudgetUnreachable { .. })
        ));
    }

    #[test]
    fn shape_only_and_calibrated_modes() {
        let cgmy = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let params = BoundParams {
            p: Some(2.0),
            ..BoundParams::default()
        };
        let inp = inputs(&cgmy, 0.05, params.clone());
        let r = evaluate_bound(BoundId::B5, &inp);
        assert_eq!(r.constant_mode, ConstantMode::Unit);
        assert!(matches!(r.value, Some(BoundValue::Shape(_))));
        let c = calibrate(BoundId::B5, &inp, 0.01).unwrap();
        let inp2 = inputs(
            &cgmy,
            0.05,
            BoundParams {
                calibration: Some(c),
                ..params
            },
        );
        let r2 = evaluate_bound(BoundId::B5, &inp2);
        assert_eq!(r2.constant_mode, ConstantMode::Calibrated);
        assert!((r2.require_value().unwrap() - 0.01).abs() < 1e-15);
        let s1 = evaluate_bound(BoundId::S1, &inp);
        assert!(s1.is_valid() && s1.numeric().is_none());
    }

    #[test]
    fn t9_gates_on_q_below_half() {
        let cgmy = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let mk = |q| BoundParams {
            q: Some(q),
            k_x: Some(1.0),
            ..BoundParams::default()
        };
        assert!(evaluate_bound(BoundId::T9, &inputs(&cgmy, 0.05, mk(0.7))).value.is_none());
        let r = evaluate_bound(BoundId::T9, &inputs(&cgmy, 0.05, mk(0.25)));
        // p = 3: K_{3,1} = 4^{3/4}, Doob factor (3/2)^3.
        let expected = 2.0 * (4f64.powf(0.75) * 3.375) * r_sigma0(&cgmy, 0.05).powf(0.75);
        assert!((r.require_value().unwrap() - expected).abs() < 1e-12);
    }

    fn r_sigma0(t: &GeneratingTriplet, eps: f64) -> f64 {
        jump_metrics::small_jump_metrics(t, eps).unwrap().sigma0
    }

    #[test]
    fn t6_requires_exponential_moment() {
        let cgmy = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let params = BoundParams {
            p: Some(6.0),
            exp_moment: Some(3.0),
            ..BoundParams::default()
        };
        let r = evaluate_bound(BoundId::T6, &inputs(&cgmy, 0.05, params.clone()));
        assert!(r.value.is_none());
        let r = evaluate_bound(BoundId::T6, &inputs(&cgmy, 0.05, BoundParams { p: Some(2.0), ..params }));
        // p = 2, q = 2: 2 · K_{2,1}^{1/2} · 3^{1/2} · σ₀
        let expected = 2.0 * 3f64.sqrt() * r_sigma0(&cgmy, 0.05);
        assert!((r.require_value().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn parse_ids() {
        assert_eq!("t4".parse::<BoundId>().unwrap(), BoundId::T4);
        assert_eq!("mean_supremum_brownian".parse::<BoundId>().unwrap(), BoundId::B1);
        assert!("Z9".parse::<BoundId>().is_err());
    }
}
