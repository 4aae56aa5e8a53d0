//! Lévy measures, generating triplets and the model zoo.
//!
//! Every measure is absolutely continuous. Integrals of the measure are
//! computed side by side on the half line `|x| ∈ (a, b]`, with geometric
//! grading toward the origin to absorb the `|x|^{-1-α}` singularity.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadResult};

/// Relative tolerance for every integral of a Lévy measure.
pub const TOL_QUAD: f64 = 1e-10;

/// Half of the real line, away from the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Negative,
    Positive,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Negative, Side::Positive];

    pub fn sign(self) -> f64 {
        match self {
            Side::Negative => -1.0,
            Side::Positive => 1.0,
        }
    }
}

/// The supported jump densities.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// No jumps.
    Null,
    /// `|x|^{-1-α}` on `0 < |x| <= 1`.
    AlphaStableLike { alpha: f64 },
    /// Constant `height` on `[center - halfwidth, center + halfwidth]`, origin excluded.
    UniformFinite {
        height: f64,
        halfwidth: f64,
        center: f64,
    },
    /// `C e^{-G|x|} |x|^{-1-Y}` for `x < 0`, `C e^{-Mx} x^{-1-Y}` for `x > 0`.
    Cgmy { c: f64, g: f64, m: f64, y: f64 },
    /// Variance gamma in Lévy-measure form: CGMY with `Y = 0` and `C = 1/κ`.
    VarianceGamma { c: f64, g: f64, m: f64 },
    /// Normal inverse Gaussian: `δα/π · e^{βx} K₁(α|x|)/|x|`.
    Nig { alpha: f64, beta: f64, delta: f64 },
    /// Sum of narrow uniform bumps `weight/(2h)` on `[loc - h, loc + h]`.
    Bumps {
        atoms: Vec<(f64, f64)>,
        halfwidth: f64,
    },
}

/// A Lévy measure `ν(dx) = density(x) dx` on `ℝ \ {0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyMeasure {
    kind: MeasureKind,
}

impl LevyMeasure {
    pub fn new(kind: MeasureKind) -> Self {
        LevyMeasure { kind }
    }

    pub fn null() -> Self {
        LevyMeasure::new(MeasureKind::Null)
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    /// Density `ν(x)`; zero at the origin and outside the support.
    pub fn density(&self, x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() {
            return 0.0;
        }
        let ax = x.abs();
        match &self.kind {
            MeasureKind::Null => 0.0,
            MeasureKind::AlphaStableLike { alpha } => {
                if ax <= 1.0 {
                    ax.powf(-1.0 - alpha)
                } else {
                    0.0
                }
            }
            MeasureKind::UniformFinite {
                height,
                halfwidth,
                center,
            } => {
                if (x - center).abs() <= *halfwidth {
                    *height
                } else {
                    0.0
                }
            }
            MeasureKind::Cgmy { c, g, m, y } => {
                let rate = if x < 0.0 { g } else { m };
                c * (-rate * ax).exp() * ax.powf(-1.0 - y)
            }
            MeasureKind::VarianceGamma { c, g, m } => {
                let rate = if x < 0.0 { g } else { m };
                c * (-rate * ax).exp() / ax
            }
            MeasureKind::Nig { alpha, beta, delta } => {
                delta * alpha / PI * (beta * x).exp() * bessel_k1(alpha * ax) / ax
            }
            MeasureKind::Bumps { atoms, halfwidth } => atoms
                .iter()
                .filter(|(loc, _)| (x - loc).abs() <= *halfwidth)
                .map(|(_, w)| w / (2.0 * halfwidth))
                .sum(),
        }
    }

    /// Density on one side as a function of `|x|`.
    pub fn side_density(&self, side: Side, r: f64) -> f64 {
        self.density(side.sign() * r)
    }

    /// Interval of `|x|` outside of which the density vanishes on `side`.
    /// `None` when the side carries no mass.
    pub fn support(&self, side: Side) -> Option<(f64, f64)> {
        match &self.kind {
            MeasureKind::Null => None,
            MeasureKind::AlphaStableLike { .. } => Some((0.0, 1.0)),
            MeasureKind::UniformFinite {
                halfwidth, center, ..
            } => {
                let (lo, hi) = (center - halfwidth, center + halfwidth);
                match side {
                    Side::Positive if hi > 0.0 => Some((lo.max(0.0), hi)),
                    Side::Negative if lo < 0.0 => Some(((-hi).max(0.0), -lo)),
                    _ => None,
                }
            }
            MeasureKind::Cgmy { .. } | MeasureKind::VarianceGamma { .. } | MeasureKind::Nig { .. } => {
                Some((0.0, f64::INFINITY))
            }
            MeasureKind::Bumps { atoms, halfwidth } => {
                let radii: Vec<f64> = atoms
                    .iter()
                    .filter(|(loc, _)| loc.signum() == side.sign())
                    .map(|(loc, _)| loc.abs())
                    .collect();
                if radii.is_empty() {
                    return None;
                }
                let lo = radii.iter().copied().fold(f64::INFINITY, f64::min) - halfwidth;
                let hi = radii.iter().copied().fold(0.0, f64::max) + halfwidth;
                Some((lo.max(0.0), hi))
            }
        }
    }

    /// Discontinuities of the side density (in `|x|`).
    pub fn breakpoints(&self, side: Side) -> Vec<f64> {
        match &self.kind {
            MeasureKind::UniformFinite { .. } => self
                .support(side)
                .map(|(lo, hi)| vec![lo, hi])
                .unwrap_or_default(),
            MeasureKind::Bumps { atoms, halfwidth } => atoms
                .iter()
                .filter(|(loc, _)| loc.signum() == side.sign())
                .flat_map(|(loc, _)| [loc.abs() - halfwidth, loc.abs() + halfwidth])
                .collect(),
            MeasureKind::AlphaStableLike { .. } => vec![1.0],
            // Switch point of the two polynomial approximations of K₁.
            MeasureKind::Nig { alpha, .. } => vec![2.0 / alpha],
            _ => Vec::new(),
        }
    }

    /// `α_hint` such that `ν(x) = O(|x|^{-1-α_hint})` near the origin.
    pub fn singularity_order(&self) -> f64 {
        match &self.kind {
            MeasureKind::AlphaStableLike { alpha } => *alpha,
            MeasureKind::Cgmy { y, .. } => *y,
            MeasureKind::Nig { .. } => 1.0,
            _ => 0.0,
        }
    }

    /// `true` when `ν(ℝ) < ∞`.
    pub fn is_finite_activity(&self) -> bool {
        matches!(
            self.kind,
            MeasureKind::Null | MeasureKind::UniformFinite { .. } | MeasureKind::Bumps { .. }
        )
    }

    /// Slowly varying factor `L(x) = |x|^{1+α_hint} ν(x)`.
    pub fn slowly_varying_factor(&self, x: f64) -> f64 {
        x.abs().powf(1.0 + self.singularity_order()) * self.density(x)
    }

    /// `∫_{a < |x| <= b, x on side} weight(|x|) ν(dx)`, with `weight >= 0`.
    pub fn integrate_side<W: Fn(f64) -> f64>(
        &self,
        side: Side,
        weight: W,
        a: f64,
        b: f64,
    ) -> Result<QuadResult> {
        let Some((lo, hi)) = self.support(side) else {
            return Ok(QuadResult::ZERO);
        };
        let (a, b) = (a.max(lo), b.min(hi));
        if !(b > a) {
            return Ok(QuadResult::ZERO);
        }
        let breaks = self.breakpoints(side);
        let integrand = |r: f64| {
            let w = weight(r);
            let d = self.side_density(side, r);
            if d.is_finite() || w == 0.0 {
                return if w == 0.0 { 0.0 } else { w * d };
            }
            // |x|^{-1-α} overflows near the origin before the weight decays.
            let r0 = 1e-100;
            let p = 1.0 + self.singularity_order();
            let log = w.abs().ln() + self.side_density(side, r0).ln() + p * (r0 / r).ln();
            w.signum() * log.exp()
        };
        quadrature::integrate_half_line(&integrand, a, b, &breaks, TOL_QUAD)
    }

    /// Numerical check of `∫ min(1, x²) ν(dx) < ∞` and of the activity flag.
    pub fn validate(&self) -> Result<()> {
        for x in [-2.0, -1.0, -0.5, -1e-3, 1e-3, 0.5, 1.0, 2.0] {
            let d = self.density(x);
            if !(d >= 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!("density({x}) = {d} is not a finite non-negative value")));
            }
        }
        for side in Side::BOTH {
            let small = self.integrate_side(side, |r| r * r, 0.0, 1.0)?;
            let large = self.integrate_side(side, |_| 1.0, 1.0, f64::INFINITY)?;
            if !small.value.is_finite() || !large.value.is_finite() {
                return Err(Error::Divergent("measure violates ∫ min(1, x²) ν(dx) < ∞".into()));
            }
            if self.is_finite_activity() {
                let mass = self.integrate_side(side, |_| 1.0, 0.0, f64::INFINITY)?;
                if !mass.value.is_finite() {
                    return Err(Error::Divergent("finite-activity measure has infinite mass".into()));
                }
            }
        }
        Ok(())
    }
}

/// `(γ, b, ν)`: drift, Gaussian volatility and Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratingTriplet {
    pub gamma: f64,
    pub b: f64,
    pub measure: LevyMeasure,
    /// Model identifier used in report names.
    pub model: String,
}

impl GeneratingTriplet {
    pub fn new(gamma: f64, b: f64, measure: LevyMeasure, model: impl Into<String>) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::param("triplet", "b", "Gaussian volatility must be finite and >= 0"));
        }
        if !gamma.is_finite() {
            return Err(Error::param("triplet", "gamma", "drift must be finite"));
        }
        Ok(GeneratingTriplet {
            gamma,
            b,
            measure,
            model: model.into(),
        })
    }

    /// Pure Brownian motion with drift.
    pub fn brownian(gamma: f64, b: f64) -> Result<Self> {
        GeneratingTriplet::new(gamma, b, LevyMeasure::null(), "brownian")
    }

    /// Same measure, different drift and volatility.
    pub fn with_diffusion(&self, gamma: f64, b: f64) -> Result<Self> {
        GeneratingTriplet::new(gamma, b, self.measure.clone(), self.model.clone())
    }
}

/// Model identifiers accepted by [`make_model`].
pub const MODEL_NAMES: [&str; 7] = [
    "alpha_stable_like",
    "uniform_finite",
    "cgmy",
    "vg",
    "nig",
    "bumps",
    "brownian",
];

struct Params<'a> {
    model: &'a str,
    values: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn new(model: &'a str, raw: &[(&str, f64)]) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, v) in raw {
            if !v.is_finite() {
                return Err(Error::param(model, k, "value must be finite"));
            }
            if values.insert(k.to_ascii_lowercase(), *v).is_some() {
                return Err(Error::param(model, k, "given twice"));
            }
        }
        Ok(Params { model, values })
    }

    fn take(&mut self, key: &str) -> Option<f64> {
        self.values.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<f64> {
        self.take(key)
            .ok_or_else(|| Error::param(self.model, key, "missing"))
    }

    fn positive(&mut self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::param(self.model, key, format!("must be > 0, got {v}")))
        }
    }

    fn finish(self) -> Result<()> {
        match self.values.keys().next() {
            Some(k) => Err(Error::param(self.model, k, "unknown parameter")),
            None => Ok(()),
        }
    }
}

/// Builds a named model. `gamma` and `b` may appear among `params` (default 0).
///
/// | name | parameters |
/// |------|------------|
/// | `alpha_stable_like` | `alpha ∈ (0,2)` |
/// | `uniform_finite` | `height > 0`, `halfwidth > 0`, optional `center` (0) |
/// | `cgmy` | `C, G, M > 0`, `Y ∈ (0,2)` |
/// | `vg` | `kappa > 0` and either `G, M > 0` or `sigma > 0` (1) with `theta` (0) |
/// | `nig` | `alpha > 0`, `|beta| < alpha`, `delta > 0` |
/// | `bumps` | `a1, w1, a2, w2, …` locations/weights, `halfwidth < min |a_i|` |
/// | `brownian` | none |
pub fn make_model(name: &str, params: &[(&str, f64)]) -> Result<GeneratingTriplet> {
    let mut p = Params::new(name, params)?;
    let gamma = p.take("gamma").unwrap_or(0.0);
    let b = p.take("b").unwrap_or(0.0);
    let kind = match name {
        "alpha_stable_like" => {
            let alpha = p.require("alpha")?;
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::param(name, "alpha", format!("must lie in (0, 2), got {alpha}")));
            }
            MeasureKind::AlphaStableLike { alpha }
        }
        "uniform_finite" => MeasureKind::UniformFinite {
            height: p.positive("height")?,
            halfwidth: p.positive("halfwidth")?,
            center: p.take("center").unwrap_or(0.0),
        },
        "cgmy" => {
            let (c, g, m) = (p.positive("c")?, p.positive("g")?, p.positive("m")?);
            let y = p.require("y")?;
            if !(y > 0.0 && y < 2.0) {
                return Err(Error::param(name, "Y", format!("must lie in (0, 2), got {y}")));
            }
            MeasureKind::Cgmy { c, g, m, y }
        }
        "vg" => {
            let kappa = p.positive("kappa")?;
            let (g, m) = match (p.take("g"), p.take("m")) {
                (Some(g), Some(m)) => {
                    if g <= 0.0 || m <= 0.0 {
                        return Err(Error::param(name, "G/M", "decay rates must be > 0"));
                    }
                    (g, m)
                }
                (None, None) => {
                    let sigma = p.take("sigma").unwrap_or(1.0);
                    let theta = p.take("theta").unwrap_or(0.0);
                    if sigma <= 0.0 {
                        return Err(Error::param(name, "sigma", "must be > 0"));
                    }
                    let s2 = sigma * sigma;
                    let root = (theta * theta + 2.0 * s2 / kappa).sqrt();
                    ((root + theta) / s2, (root - theta) / s2)
                }
                _ => return Err(Error::param(name, "G/M", "give both G and M, or neither")),
            };
            MeasureKind::VarianceGamma {
                c: 1.0 / kappa,
                g,
                m,
            }
        }
        "nig" => {
            let alpha = p.positive("alpha")?;
            let beta = p.require("beta")?;
            let delta = p.positive("delta")?;
            if beta.abs() >= alpha {
                return Err(Error::param(name, "beta", "requires |beta| < alpha"));
            }
            MeasureKind::Nig { alpha, beta, delta }
        }
        "bumps" => {
            let halfwidth = p.positive("halfwidth")?;
            let mut atoms = Vec::new();
            for i in 1.. {
                let (Some(loc), Some(w)) = (p.take(&format!("a{i}")), p.take(&format!("w{i}"))) else {
                    break;
                };
                if w <= 0.0 {
                    return Err(Error::param(name, &format!("w{i}"), "weights must be > 0"));
                }
                if loc.abs() <= halfwidth {
                    return Err(Error::param(name, &format!("a{i}"), "bump must not cover the origin"));
                }
                atoms.push((loc, w));
            }
            if atoms.is_empty() {
                return Err(Error::param(name, "a1", "at least one (a_i, w_i) pair is required"));
            }
            MeasureKind::Bumps { atoms, halfwidth }
        }
        "brownian" | "null" => MeasureKind::Null,
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    p.finish()?;
    let measure = LevyMeasure::new(kind);
    measure.validate()?;
    GeneratingTriplet::new(gamma, b, measure, name)
}

/// Plain-text model specification (`[model]` table of a study config).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelSpec {
    pub fn build(&self) -> Result<GeneratingTriplet> {
        let mut params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        params.push(("gamma", self.gamma));
        params.push(("b", self.b));
        make_model(&self.name, &params)
    }

    /// Parses a TOML document holding `name`, `gamma`, `b` and a `params` table.
    pub fn from_toml_str(text: &str) -> Result<ModelSpec> {
        toml::from_str(text).map_err(|e| crate::study::toml_error(text, &e))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")))
    }
}

/// `∫_{|x|<=ε} x^k ν(dx)`, or `∫ |x|^k ν(dx)` when `absolute`.
pub fn truncated_moment(measure: &LevyMeasure, k: u32, eps: f64, absolute: bool) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "truncated moments need k >= 2 (got {k})"
        )));
    }
    check_eps(eps)?;
    band_moment(measure, k, 0.0, eps, absolute)
}

/// `∫_{lo<|x|<=hi} x^k ν(dx)` (or with `|x|^k`) for any `0 <= lo < hi`.
pub fn band_moment(measure: &LevyMeasure, k: u32, lo: f64, hi: f64, absolute: bool) -> Result<f64> {
    let mut total = 0.0;
    for side in Side::BOTH {
        let v = measure
            .integrate_side(side, |r| r.powi(k as i32), lo, hi)?
            .value;
        let sign = if absolute || k & 1 == 0 { 1.0 } else { side.sign() };
        total += sign * v;
    }
    Ok(total)
}

/// `λ(ε) = ν(|x| > ε)`.
pub fn tail_mass(measure: &LevyMeasure, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    band_mass(measure, eps, f64::INFINITY)
}

/// `ν(lo < |x| <= hi)`.
pub fn band_mass(measure: &LevyMeasure, lo: f64, hi: f64) -> Result<f64> {
    let mut total = 0.0;
    for side in Side::BOTH {
        total += measure.integrate_side(side, |_| 1.0, lo, hi)?.value;
    }
    Ok(total)
}

/// `c(ε) = ∫_{ε<|x|<=1} x ν(dx)`: drift correction of the retained jumps.
pub fn compensator(measure: &LevyMeasure, eps: f64) -> Result<f64> {
    if eps >= 1.0 {
        return Ok(0.0);
    }
    band_mean(measure, eps, 1.0)
}

/// `∫_{lo<|x|<=hi} x ν(dx)`.
pub fn band_mean(measure: &LevyMeasure, lo: f64, hi: f64) -> Result<f64> {
    let mut total = 0.0;
    for side in Side::BOTH {
        total += side.sign() * measure.integrate_side(side, |r| r, lo, hi)?.value;
    }
    Ok(total)
}

/// Value of `∫_{x>1} e^{px} ν(dx)` or a divergence verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpTail {
    Finite(f64),
    Divergent,
}

impl ExpTail {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExpTail::Finite(_))
    }
}

/// Exponential-moment integral gating the exponential-supremum bounds.
///
/// Integrates over doubling panels `[2^j, 2^{j+1}]`; three consecutive growing
/// panels (or an overflow) mean divergence.
pub fn exp_tail_integral(measure: &LevyMeasure, p: f64) -> Result<ExpTail> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("p must be > 0, got {p}")));
    }
    let Some((_, hi)) = measure.support(Side::Positive) else {
        return Ok(ExpTail::Finite(0.0));
    };
    if hi <= 1.0 {
        return Ok(ExpTail::Finite(0.0));
    }
    let breaks = measure.breakpoints(Side::Positive);
    let f = |x: f64| (p * x).exp() * measure.density(x);
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut growing = 0;
    let mut lo: f64 = 1.0;
    while lo < hi {
        let up = (2.0 * lo).min(hi);
        let v = match quadrature::adaptive_with_breaks(&f, lo, up, &breaks, TOL_QUAD, 1e-300) {
            Ok(r) => r.value,
            Err(Error::Numerical(_)) => return Ok(ExpTail::Divergent),
            Err(e) => return Err(e),
        };
        if !v.is_finite() {
            return Ok(ExpTail::Divergent);
        }
        sum += v;
        if v > prev {
            growing += 1;
            if growing >= 3 {
                return Ok(ExpTail::Divergent);
            }
        } else {
            growing = 0;
            if v <= 1e-3 * TOL_QUAD * sum {
                return Ok(ExpTail::Finite(sum));
            }
        }
        prev = v;
        lo = up;
        if lo > 1e300 {
            return Ok(ExpTail::Divergent);
        }
    }
    Ok(ExpTail::Finite(sum))
}

/// Modified Bessel function `K₁(x)` for `x > 0` (polynomial approximations,
/// relative error below about 2e-7).
pub fn bessel_k1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    if x <= 2.0 {
        let y = x * x / 4.0;
        let poly = 1.0
            + y * (0.154_431_44
                + y * (-0.672_785_79
                    + y * (-0.181_568_97 + y * (-0.019_194_02 + y * (-0.001_104_04 + y * -0.000_046_86)))));
        ((x / 2.0).ln() * x * bessel_i1(x) + poly) / x
    } else {
        let z = 2.0 / x;
        let poly = 1.253_314_14
            + z * (0.234_986_19
                + z * (-0.036_556_2
                    + z * (0.015_042_68 + z * (-0.007_803_53 + z * (0.003_256_14 + z * -0.000_682_45)))));
        poly * (-x).exp() / x.sqrt()
    }
}

fn bessel_i1(x: f64) -> f64 {
    let t = (x / 3.75).powi(2);
    x * (0.5
        + t * (0.878_905_94
            + t * (0.514_988_69 + t * (0.150_849_34 + t * (0.026_587_33 + t * (0.003_015_32 + t * 0.000_324_11))))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable(alpha: f64) -> GeneratingTriplet {
        make_model("alpha_stable_like", &[("alpha", alpha)]).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn stable_like_constructor_matches_definition() {
        let m = stable(1.0);
        assert_eq!(m.gamma, 0.0);
        assert_eq!(m.b, 0.0);
        assert!((m.measure.density(0.5) - 4.0).abs() < 1e-15);
        assert!((m.measure.density(-0.25) - 16.0).abs() < 1e-12);
        assert_eq!(m.measure.density(1.5), 0.0);
        assert!(!m.measure.is_finite_activity());
    }

    #[test]
    fn stable_like_moments_are_closed_form() {
        let m = stable(1.0);
        let k2 = truncated_moment(&m.measure, 2, 0.1, false).unwrap();
        let k4 = truncated_moment(&m.measure, 4, 0.1, false).unwrap();
        assert!(rel(k2, 0.2) < 1e-8, "{k2}");
        assert!(rel(k4, 2.0 * 1e-3 / 3.0) < 1e-8, "{k4}");
        let a3 = truncated_moment(&m.measure, 3, 0.1, true).unwrap();
        assert!(rel(a3, 0.01) < 1e-8);
        // Odd signed moments cancel for a symmetric density.
        assert!(truncated_moment(&m.measure, 3, 0.1, false).unwrap().abs() < 1e-14);
    }

    #[test]
    fn stable_like_tail_mass_closed_form() {
        let m = stable(1.0);
        assert!(rel(tail_mass(&m.measure, 0.5).unwrap(), 2.0) < 1e-10);
        let m = stable(1.5);
        // 2 ∫_ε^1 x^{-2.5} dx = (2/1.5)(ε^{-1.5} - 1)
        let eps: f64 = 0.01;
        let exact = 2.0 / 1.5 * (eps.powf(-1.5) - 1.0);
        assert!(rel(tail_mass(&m.measure, eps).unwrap(), exact) < 1e-9);
    }

    #[test]
    fn uniform_finite_has_unit_mass() {
        let m = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1)]).unwrap();
        assert!(m.measure.is_finite_activity());
        let total = band_mass(&m.measure, 0.0, f64::INFINITY).unwrap();
        assert!((total - 1.0).abs() < 1e-12);
        let k2 = truncated_moment(&m.measure, 2, 0.05, false).unwrap();
        assert!(rel(k2, 2.0 * 5.0 * 0.05f64.powi(3) / 3.0) < 1e-10);
        assert_eq!(tail_mass(&m.measure, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn cgmy_small_eps_matches_asymptote() {
        let m = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let eps: f64 = 1e-6;
        let s2 = truncated_moment(&m.measure, 2, eps, false).unwrap();
        let asym = 2.0 * eps.powf(0.8) / 0.8;
        assert!(rel(s2, asym) < 1e-4, "{s2} vs {asym}");
        let lam = tail_mass(&m.measure, 0.01).unwrap();
        assert!(lam.is_finite() && lam > 0.0);
    }

    #[test]
    fn exp_tail_detects_divergence() {
        let m = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        assert!(exp_tail_integral(&m.measure, 2.0).unwrap().is_finite());
        assert_eq!(exp_tail_integral(&m.measure, 6.0).unwrap(), ExpTail::Divergent);
        assert_eq!(exp_tail_integral(&stable(1.0).measure, 3.0).unwrap(), ExpTail::Finite(0.0));
    }

    #[test]
    fn exp_tail_value_for_cgmy() {
        // ∫_1^∞ e^{-3x} x^{-2.2} dx by a fine independent Simpson rule.
        let m = make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap();
        let got = match exp_tail_integral(&m.measure, 2.0).unwrap() {
            ExpTail::Finite(v) => v,
            ExpTail::Divergent => panic!("should converge"),
        };
        let n = 200_000;
        let (a, b) = (1.0, 21.0);
        let h = (b - a) / n as f64;
        let g = |x: f64| (-3.0 * x).exp() * x.powf(-2.2);
        let mut s = g(a) + g(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        let simpson = s * h / 3.0;
        assert!(rel(got, simpson) < 1e-9, "{got} vs {simpson}");
    }

    #[test]
    fn unknown_model_and_bad_parameters_are_rejected() {
        assert_eq!(make_model("heston", &[]), Err(Error::UnknownModel("heston".into())));
        assert!(matches!(
            make_model("alpha_stable_like", &[("alpha", 2.5)]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2), ("Q", 1.0)]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            make_model("nig", &[("alpha", 1.0), ("beta", 1.5), ("delta", 1.0)]),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(make_model("brownian", &[("b", -1.0)]), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn k_below_two_is_rejected() {
        let m = stable(1.0);
        assert!(truncated_moment(&m.measure, 1, 0.1, false).is_err());
    }

    #[test]
    fn vg_measure_near_origin_is_one_over_kappa_x() {
        let m = make_model("vg", &[("kappa", 0.25), ("G", 0.1), ("M", 0.1)]).unwrap();
        let x = 1e-4;
        assert!(rel(m.measure.density(x) * x, 4.0) < 1e-4);
        let s2 = truncated_moment(&m.measure, 2, 1e-3, false).unwrap();
        assert!(rel(s2, 1e-6 / 0.25) < 1e-3);
    }

    #[test]
    fn nig_density_has_cauchy_like_origin() {
        let m = make_model("nig", &[("alpha", 2.0), ("beta", 0.5), ("delta", 1.0)]).unwrap();
        // ν(x) → δ/(π x²) as x → 0
        let x: f64 = 1e-5;
        assert!(rel(m.measure.density(x) * x * x, 1.0 / PI) < 1e-4);
        let s2 = truncated_moment(&m.measure, 2, 1e-3, false).unwrap();
        assert!(rel(s2, 2.0 * 1e-3 / PI) < 1e-3);
    }

    #[test]
    fn bessel_k1_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!(rel(bessel_k1(1.0), 0.601_907_23) < 1e-6);
        assert!(rel(bessel_k1(0.1), 9.853_844_8) < 1e-6);
        assert!(rel(bessel_k1(5.0), 0.004_044_613_4) < 1e-6);
    }

    #[test]
    fn model_spec_parses_from_toml() {
        let spec = ModelSpec::from_toml_str(
            "name = \"cgmy\"\ngamma = 0.1\nb = 0.2\n[params]\nC = 1.0\nG = 5.0\nM = 5.0\nY = 1.2\n",
        )
        .unwrap();
        let t = spec.build().unwrap();
        assert_eq!(t.gamma, 0.1);
        assert_eq!(t.b, 0.2);
        assert!(matches!(t.measure.kind(), MeasureKind::Cgmy { .. }));
    }

    #[test]
    fn steep_power_law_near_origin() {
        // |x|^{-2.95} overflows below ~1e-105; the weighted integrand must not.
        for alpha in [1.9, 1.95, 1.99] {
            let m = stable(alpha);
            let eps: f64 = 0.1;
            let exact = 2.0 * eps.powf(2.0 - alpha) / (2.0 - alpha);
            let got = truncated_moment(&m.measure, 2, eps, false).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-6, "alpha {alpha}: {got} vs {exact}");
        }
    }
}
