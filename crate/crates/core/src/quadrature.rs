//! Numerical integration: adaptive 7/15-point Gauss–Kronrod panels, geometric
//! grading toward an integrable singularity at the origin and toward infinity,
//! and Gauss–Legendre rules for smooth integrands on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an integration: the value and an estimate of its absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
}

impl std::ops::Add for QuadResult {
    type Output = QuadResult;
    fn add(self, rhs: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + rhs.value,
            abs_error: self.abs_error + rhs.abs_error,
        }
    }
}

impl QuadResult {
    pub const ZERO: QuadResult = QuadResult {
        value: 0.0,
        abs_error: 0.0,
    };
}

/// One Gauss–Kronrod 15-point panel. Returns (kronrod value, |kronrod - gauss|).
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    // Round-off floor so smooth panels can be declared converged.
    let floor = 50.0 * f64::EPSILON * value.abs();
    (value, err.max(floor))
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the summed error is
/// below `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    adaptive_with_breaks(f, a, b, &[], rel_tol, abs_tol)
}

/// Same as [`adaptive`] with an initial subdivision at the interior `breaks`.
pub fn adaptive_with_breaks<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult> {
    const MAX_SEGMENTS: usize = 2000;
    if !(b > a) {
        return Ok(QuadResult::ZERO);
    }
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();

    let mut segments: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    loop {
        let total: f64 = segments.iter().map(|s| s.2).sum();
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{a:e}, {b:e}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                abs_error: err,
            });
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Quadrature {
                achieved: err / total.abs().max(f64::MIN_POSITIVE),
                requested: rel_tol,
            });
        }
        let (idx, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("at least one segment");
        let (lo, hi, _, _) = segments.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // Interval exhausted at machine precision.
            return Err(Error::Quadrature {
                achieved: err / total.abs().max(f64::MIN_POSITIVE),
                requested: rel_tol,
            });
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
}

/// Integrates a non-negative `f` over `[a, b] ⊂ [0, ∞]`.
///
/// When `a == 0` the range near the origin is covered by panels `[m 2^-(j+1), m 2^-j]`
/// until the geometric tail of panel contributions is negligible; the remaining tail is
/// extrapolated from the observed panel ratio. When `b` is infinite panels double
/// outward until contributions vanish. `breaks` are discontinuities of `f`.
pub fn integrate_half_line<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    if !(b > a) {
        return Ok(QuadResult::ZERO);
    }
    let mut total = QuadResult::ZERO;
    let outward_start = if a == 0.0 {
        let pivot = if b.is_finite() { b.min(1.0) } else { 1.0 };
        total = total + graded_toward_zero(f, pivot, breaks, rel_tol)?;
        pivot
    } else {
        a
    };
    if b > outward_start {
        total = total + graded_outward(f, outward_start, b, breaks, rel_tol)?;
    }
    Ok(total)
}

fn panel<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    // Panel-local absolute floor keeps zero-valued panels cheap.
    adaptive_with_breaks(f, lo, hi, breaks, rel_tol, 1e-300)
}

fn graded_toward_zero<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    pivot: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    const MAX_PANELS: usize = 1000;
    let mut sum = QuadResult::ZERO;
    let mut prev: Option<f64> = None;
    let mut prev_ratio: Option<f64> = None;
    let mut hi = pivot;
    for j in 0..MAX_PANELS {
        let lo = 0.5 * hi;
        let v = panel(f, lo, hi, breaks, rel_tol)?;
        sum = sum + v;
        if v.value == 0.0 && j > 2 && prev == Some(0.0) {
            return Ok(sum);
        }
        let mut ratio_now = None;
        if let Some(p) = prev {
            if p > 0.0 && j >= 3 {
                let ratio = v.value / p;
                ratio_now = Some(ratio);
                if ratio < 1.0 {
                    let tail = v.value * ratio / (1.0 - ratio);
                    let target = 0.1 * rel_tol * sum.value.abs();
                    if tail <= target {
                        return Ok(QuadResult {
                            value: sum.value + tail,
                            abs_error: sum.abs_error + tail,
                        });
                    }
                    // Near x^{-1} the tail is large but exactly geometric; accept the
                    // extrapolation once the ratio has settled.
                    if let Some(r0) = prev_ratio {
                        let tail_err = tail * (ratio - r0).abs() / (ratio * (1.0 - ratio));
                        if ratio < 0.999 && tail_err <= target {
                            return Ok(QuadResult {
                                value: sum.value + tail,
                                abs_error: sum.abs_error + tail_err,
                            });
                        }
                    }
                }
            }
        }
        prev_ratio = ratio_now;
        if lo < 1e-290 {
            break;
        }
        prev = Some(v.value);
        hi = lo;
    }
    Err(Error::Quadrature {
        achieved: prev.unwrap_or(1.0) / sum.value.abs().max(f64::MIN_POSITIVE),
        requested: rel_tol,
    })
}

fn graded_outward<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    start: f64,
    end: f64,
    breaks: &[f64],
    rel_tol: f64,
) -> Result<QuadResult> {
    const MAX_PANELS: usize = 1100;
    let mut sum = QuadResult::ZERO;
    let mut lo = start;
    let mut prev = f64::INFINITY;
    for _ in 0..MAX_PANELS {
        let hi = (2.0 * lo).min(end);
        let v = panel(f, lo, hi, breaks, rel_tol)?;
        if !v.value.is_finite() {
            return Err(Error::Divergent(format!(
                "integrand not integrable near x = {hi:e}"
            )));
        }
        sum = sum + v;
        if hi >= end {
            return Ok(sum);
        }
        if end.is_infinite() && v.value <= 0.01 * rel_tol * sum.value.abs() && v.value <= 0.5 * prev
        {
            return Ok(sum);
        }
        if end.is_infinite() && sum.value == 0.0 && hi > 1e6 {
            return Ok(sum);
        }
        prev = v.value;
        lo = hi;
    }
    Err(Error::Quadrature {
        achieved: prev / sum.value.abs().max(f64::MIN_POSITIVE),
        requested: rel_tol,
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk15_is_exact_for_polynomials_up_to_degree_22() {
        let (v, _) = gk15(&|x: f64| x.powi(10), 0.0, 1.0);
        assert!((v - 1.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_a_kink() {
        let r = adaptive(&|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-12, 0.0).unwrap();
        let exact = 0.5 * 0.09 + 0.5 * 0.49;
        assert!((r.value - exact).abs() < 1e-11);
    }

    #[test]
    fn breaks_resolve_a_step() {
        let f = |x: f64| if x < 0.25 { 1.0 } else { 3.0 };
        let r = adaptive_with_breaks(&f, 0.0, 1.0, &[0.25], 1e-13, 0.0).unwrap();
        assert!((r.value - 2.5).abs() < 1e-13);
    }

    #[test]
    fn graded_grid_integrates_power_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let r = integrate_half_line(&|x: f64| x.powf(-0.9), 0.0, 1.0, &[], 1e-11).unwrap();
        assert!((r.value - 10.0).abs() / 10.0 < 1e-9, "{}", r.value);
    }

    #[test]
    fn outward_grid_integrates_exponential_tail() {
        // ∫_1^∞ e^{-x} dx = e^{-1}
        let r = integrate_half_line(&|x: f64| (-x).exp(), 1.0, f64::INFINITY, &[], 1e-12).unwrap();
        assert!((r.value - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn legendre_rule_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((s - 2.0 / 15.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }
}
