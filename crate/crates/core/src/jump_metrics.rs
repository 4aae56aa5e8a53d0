//! Scalar functionals of the small jumps: σ(ε), σ₀, ρ, β, the β-profiles,
//! moments of the residual `R^ε_t` and their tracked constants.

use crate::error::{Error, Result};
use crate::levy_models::{self, GeneratingTriplet, LevyMeasure};
use crate::stats;

/// Largest moment order handled by [`r_moments`].
pub const MAX_MOMENT_ORDER: usize = 20;

/// ε-indexed small-jump scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallJumpMetrics {
    pub eps: f64,
    /// `σ(ε) = (∫_{|x|<=ε} x² ν(dx))^{1/2}`
    pub sigma: f64,
    /// `max(σ(ε), ε)`
    pub sigma0: f64,
    /// `σ^{-3} ∫_{|x|<=ε} |x|³ ν(dx)`, zero when σ is.
    pub rho: f64,
    /// `∫_{|x|<=ε} x⁴ ν(dx) / σ₀⁴`
    pub beta: f64,
    /// `ν(|x| > ε)`
    pub lambda_tail: f64,
    /// `∫_{ε<|x|<=1} x ν(dx)`
    pub compensator: f64,
    /// `false` for finite-activity measures.
    pub infinite_activity: bool,
}

pub fn small_jump_metrics(triplet: &GeneratingTriplet, eps: f64) -> Result<SmallJumpMetrics> {
    metrics_for_measure(&triplet.measure, eps)
}

pub fn metrics_for_measure(measure: &LevyMeasure, eps: f64) -> Result<SmallJumpMetrics> {
    let m2 = levy_models::truncated_moment(measure, 2, eps, false)?;
    let a3 = levy_models::truncated_moment(measure, 3, eps, true)?;
    let m4 = levy_models::truncated_moment(measure, 4, eps, false)?;
    let sigma = m2.max(0.0).sqrt();
    let sigma0 = sigma.max(eps);
    let rho = if sigma > 0.0 { a3 / (sigma * sigma * sigma) } else { 0.0 };
    Ok(SmallJumpMetrics {
        eps,
        sigma,
        sigma0,
        rho,
        beta: m4 / sigma0.powi(4),
        lambda_tail: levy_models::tail_mass(measure, eps)?,
        compensator: levy_models::compensator(measure, eps)?,
        infinite_activity: !measure.is_finite_activity(),
    })
}

/// β-profiles at horizon `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaProfile {
    pub t: f64,
    pub beta1_t: f64,
    pub beta2_t: f64,
    pub beta_p_theta_t: f64,
    pub p: f64,
    pub theta: f64,
}

/// `β₁ᵗ = β^{1/6}(√ln(t/β^{1/3}+3) + 1)`.
pub fn beta1(beta: f64, t: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    beta.powf(1.0 / 6.0) * ((t / beta.cbrt() + 3.0).ln().sqrt() + 1.0)
}

/// `β₂ᵗ = β^{1/4}(ln(t/β^{1/4}+3) + 1)`.
pub fn beta2(beta: f64, t: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let q = beta.powf(0.25);
    q * ((t / q + 3.0).ln() + 1.0)
}

/// `β_{p,θ}ᵗ = β^e[(ln(t/β^e+3))^p + 1]` with `e = pθ/(p+4θ)`.
pub fn beta_p_theta(beta: f64, t: f64, p: f64, theta: f64) -> f64 {
    if beta <= 0.0 {
        return 0.0;
    }
    let e = beta.powf(p * theta / (p + 4.0 * theta));
    e * ((t / e + 3.0).ln().powf(p) + 1.0)
}

pub fn beta_profiles(metrics: &SmallJumpMetrics, t: f64, p: f64, theta: f64) -> Result<BetaProfile> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be > 0, got {t}")));
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1), got {theta}")));
    }
    let beta = metrics.beta;
    Ok(BetaProfile {
        t,
        beta1_t: beta1(beta, t),
        beta2_t: beta2(beta, t),
        beta_p_theta_t: beta_p_theta(beta, t, p, theta),
        p,
        theta,
    })
}

/// Cumulants, moments and tracked constants of `R^ε_t`. Index `k` holds order `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RMomentTable {
    pub t: f64,
    pub eps: f64,
    pub max_order: usize,
    pub sigma0: f64,
    pub cumulants: Vec<f64>,
    pub moments: Vec<f64>,
    /// `K_{m,t}` with `|μ′_m| <= K_{m,t} σ₀^m`.
    pub constants: Vec<f64>,
}

impl RMomentTable {
    /// `K_{q,t}` for real `q` in `(0, max_order]`.
    pub fn constant(&self, q: f64) -> Result<f64> {
        if q > self.max_order as f64 {
            return Err(Error::OrderTooLarge {
                order: q.ceil() as usize,
                max: self.max_order,
            });
        }
        moment_bound_constant(q, self.t)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Raw moments `μ′_0..μ′_K` from cumulants `c_1..c_K` (slot 0 ignored):
/// `μ′_m = Σ_{n<m} C(m-1,n) μ′_n c_{m-n}`.
pub fn moments_from_cumulants(cumulants: &[f64]) -> Vec<f64> {
    let k = cumulants.len().saturating_sub(1);
    let mut mu = vec![0.0; k + 1];
    mu[0] = 1.0;
    for m in 1..=k {
        mu[m] = stats::compensated_sum((0..m).map(|n| binomial(m - 1, n) * mu[n] * cumulants[m - n]));
    }
    mu
}

/// `K_{0..=max}` from `K_m = t Σ_{n<=m-2} C(m-1,n) K_n`, `K_0 = 1`, `K_1 = 0`.
pub fn tracked_constants(max_order: usize, t: f64) -> Vec<f64> {
    let mut k = vec![0.0; max_order + 1];
    k[0] = 1.0;
    for m in 2..=max_order {
        k[m] = t * (0..=m - 2).map(|n| binomial(m - 1, n) * k[n]).sum::<f64>();
    }
    k
}

/// `K_{q,t}` with `E|R^ε_t|^q <= K_{q,t} σ₀^q`. Non-even `q` goes through
/// `(E R^{2n})^{q/(2n)}` with `n = ⌈q/2⌉`.
pub fn moment_bound_constant(q: f64, t: f64) -> Result<f64> {
    if !(q > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("need q > 0 and t > 0, got q={q}, t={t}")));
    }
    let n = (q / 2.0).ceil() as usize;
    if 2 * n > MAX_MOMENT_ORDER {
        return Err(Error::OrderTooLarge {
            order: 2 * n,
            max: MAX_MOMENT_ORDER,
        });
    }
    let k = tracked_constants(2 * n, t)[2 * n];
    Ok(k.powf(q / (2 * n) as f64))
}

pub fn r_moments(triplet: &GeneratingTriplet, eps: f64, t: f64, max_order: usize) -> Result<RMomentTable> {
    if max_order > MAX_MOMENT_ORDER {
        return Err(Error::OrderTooLarge {
            order: max_order,
            max: MAX_MOMENT_ORDER,
        });
    }
    if max_order < 2 {
        return Err(Error::InvalidArgument(format!("max_order must be >= 2, got {max_order}")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("t must be > 0, got {t}")));
    }
    let mut cumulants = vec![0.0; max_order + 1];
    for (k, c) in cumulants.iter_mut().enumerate().skip(2) {
        *c = t * levy_models::truncated_moment(&triplet.measure, k as u32, eps, false)?;
    }
    let sigma = (cumulants[2] / t).max(0.0).sqrt();
    Ok(RMomentTable {
        t,
        eps,
        max_order,
        sigma0: sigma.max(eps),
        moments: moments_from_cumulants(&cumulants),
        cumulants,
        constants: tracked_constants(max_order, t),
    })
}

/// Outcome of the Gaussian-limit diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArVerdict {
    /// σ(ε)/ε grows as ε decreases and the ratios approach 1.
    Justified,
    /// σ(ε)/ε stays bounded (or vanishes).
    NotJustified,
    /// Too few grid points to tell.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArRow {
    pub eps: f64,
    pub sigma: f64,
    pub sigma_over_eps: f64,
    /// `σ(kσ(ε) ∧ ε)/σ(ε)` per `k`; NaN when σ(ε) = 0.
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArDiagnostic {
    pub k_grid: Vec<f64>,
    pub rows: Vec<ArRow>,
    /// Slope of `ln(σ/ε)` against `ln ε`; NaN with fewer than two usable rows.
    pub slope: f64,
    pub verdict: ArVerdict,
}

/// Slope below which σ/ε counts as growing.
const AR_SLOPE_TOL: f64 = 0.01;

pub fn ar_diagnostic(triplet: &GeneratingTriplet, eps_grid: &[f64], k_grid: &[f64]) -> Result<ArDiagnostic> {
    if eps_grid.is_empty() || k_grid.is_empty() {
        return Err(Error::InvalidArgument("eps and k grids must be non-empty".into()));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("eps grid must be strictly decreasing".into()));
    }
    if k_grid.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidArgument("k grid entries must be > 0".into()));
    }
    let sigma_at = |e: f64| -> Result<f64> {
        Ok(levy_models::truncated_moment(&triplet.measure, 2, e, false)?.max(0.0).sqrt())
    };
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sigma = sigma_at(eps)?;
        let ratios = k_grid
            .iter()
            .map(|&k| {
                if sigma > 0.0 {
                    Ok(sigma_at((k * sigma).min(eps))? / sigma)
                } else {
                    Ok(f64::NAN)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ArRow {
            eps,
            sigma,
            sigma_over_eps: sigma / eps,
            ratios,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sigma_over_eps).collect();
    let slope = stats::log_log_regression(&xs, &ys).map_or(f64::NAN, |r| r.slope);
    let verdict = if rows.len() < 2 {
        ArVerdict::Inconclusive
    } else if rows.iter().any(|r| r.sigma == 0.0) || !(slope < -AR_SLOPE_TOL) {
        ArVerdict::NotJustified
    } else {
        let (first, last) = (&rows[0], &rows[rows.len() - 1]);
        let closer = first
            .ratios
            .iter()
            .zip(&last.ratios)
            .all(|(a, b)| (1.0 - b).abs() <= (1.0 - a).abs() + 1e-12);
        if closer {
            ArVerdict::Justified
        } else {
            ArVerdict::Inconclusive
        }
    };
    Ok(ArDiagnostic {
        k_grid: k_grid.to_vec(),
        rows,
        slope,
        verdict,
    })
}

/// Small-ε asymptote `((L(-ε)+L(ε))/(2-α))^{1/2} ε^{1-α/2}` of σ(ε) for a
/// measure with `ν(x) ~ L(x)|x|^{-1-α}` at the origin.
pub fn sigma_asymptote(measure: &LevyMeasure, eps: f64) -> f64 {
    let alpha = measure.singularity_order();
    let l = measure.slowly_varying_factor(-eps) + measure.slowly_varying_factor(eps);
    (l / (2.0 - alpha)).sqrt() * eps.powf(1.0 - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::make_model;

    fn stable1() -> GeneratingTriplet {
        make_model("alpha_stable_like", &[("alpha", 1.0)]).unwrap()
    }

    #[test]
    fn stable_like_metrics_closed_form() {
        let m = small_jump_metrics(&stable1(), 0.1).unwrap();
        assert!((m.sigma - 0.2f64.sqrt()).abs() < 1e-9);
        assert_eq!(m.sigma0, m.sigma);
        assert!((m.rho - 0.01 / 0.2f64.powf(1.5)).abs() < 1e-9);
        assert!((m.beta - (2e-3 / 3.0) / 0.04).abs() < 1e-10);
        assert!((m.lambda_tail - 18.0).abs() < 1e-8);
        assert!(m.compensator.abs() < 1e-12);
        assert!(m.infinite_activity);
    }

    #[test]
    fn uniform_metrics_constant_beyond_support() {
        let u = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1)]).unwrap();
        let a = small_jump_metrics(&u, 0.5).unwrap();
        let b = small_jump_metrics(&u, 0.2).unwrap();
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.lambda_tail, 0.0);
        assert_eq!(a.sigma0, 0.5);
        assert!((a.sigma * a.sigma - 2.0 * 5.0 * 1e-3 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn sigma0_is_eps_when_sigma_small() {
        let u = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1), ("center", 0.5)]).unwrap();
        let m = small_jump_metrics(&u, 0.1).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.sigma0, 0.1);
        assert_eq!(m.rho, 0.0);
    }

    #[test]
    fn beta_profile_reference_values() {
        // β = 1, t = 1, p = 1, θ = 0.5: exponent 1/6 on 1, value ln 4 + 1.
        assert!((beta_p_theta(1.0, 1.0, 1.0, 0.5) - (4f64.ln() + 1.0)).abs() < 1e-14);
        let b: f64 = 1.0 / 60.0;
        let expected = b.powf(1.0 / 6.0) * ((1.0 / b.powf(1.0 / 3.0) + 3.0).ln().sqrt() + 1.0);
        assert!((beta1(b, 1.0) - expected).abs() < 1e-15);
        // Independent hand evaluation: 0.016667^{1/6} = 0.50540, ln(3.9149+3) = 1.93366.
        assert!((beta1(b, 1.0) - 0.505_40 * (1.933_66f64.sqrt() + 1.0)).abs() < 1e-4);
        assert_eq!(beta1(0.0, 1.0), 0.0);
        assert!(beta2(1e-30, 1.0) < 1e-6);
    }

    #[test]
    fn fourth_moment_matches_closed_form() {
        let t = r_moments(&stable1(), 0.1, 1.0, 4).unwrap();
        assert!((t.moments[4] - (2e-3 / 3.0 + 3.0 * 0.04)).abs() < 1e-10);
        assert!((t.moments[2] - 0.2).abs() < 1e-10);
        assert_eq!(t.moments[1], 0.0);
        assert_eq!(t.moments[0], 1.0);
    }

    #[test]
    fn tracked_constants_small_orders() {
        let k = tracked_constants(6, 2.0);
        assert_eq!(&k[..5], &[1.0, 0.0, 2.0, 2.0, 2.0 * 7.0]);
        // K_6 = t(C(5,0)K0 + C(5,2)K2 + C(5,3)K3 + C(5,4)K4)
        assert_eq!(k[6], 2.0 * (1.0 + 10.0 * 2.0 + 10.0 * 2.0 + 5.0 * 14.0));
    }

    #[test]
    fn jensen_constant_uses_next_even_order() {
        let k3 = moment_bound_constant(3.0, 1.0).unwrap();
        assert!((k3 - 4f64.powf(0.75)).abs() < 1e-14);
        assert_eq!(moment_bound_constant(4.0, 1.0).unwrap(), 4.0);
        assert!(matches!(moment_bound_constant(21.0, 1.0), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn order_guard() {
        assert!(matches!(r_moments(&stable1(), 0.1, 1.0, 22), Err(Error::OrderTooLarge { .. })));
    }

    #[test]
    fn ar_diagnostic_cgmy_vs_vg() {
        let cgmy = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let d = ar_diagnostic(&cgmy, &[0.1, 0.01, 0.001], &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(d.verdict, ArVerdict::Justified);
        assert!(d.rows.windows(2).all(|w| w[1].sigma_over_eps > w[0].sigma_over_eps));
        let vg = make_model("vg", &[("kappa", 0.25), ("G", 0.1), ("M", 0.1)]).unwrap();
        let d = ar_diagnostic(&vg, &[0.1, 0.01, 0.001], &[1.0]).unwrap();
        assert_eq!(d.verdict, ArVerdict::NotJustified);
        assert!(d.rows.iter().all(|r| (r.sigma_over_eps - 2.0).abs() < 0.05));
        let u = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1)]).unwrap();
        let d = ar_diagnostic(&u, &[0.01, 0.001], &[1.0]).unwrap();
        assert!(d.rows[1].sigma_over_eps < d.rows[0].sigma_over_eps);
        assert_eq!(d.verdict, ArVerdict::NotJustified);
    }

    #[test]
    fn asymptote_matches_cgmy_small_eps() {
        let cgmy = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let eps = 1e-5;
        let s = small_jump_metrics(&cgmy, eps).unwrap().sigma;
        assert!((s / sigma_asymptote(&cgmy.measure, eps) - 1.0).abs() < 1e-3);
    }
}
