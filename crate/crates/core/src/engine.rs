//! Monte Carlo paths of the truncated, Gaussian-substituted and refined schemes.
//!
//! Randomness is counter based: path `i` draws stream role `r` from a ChaCha8
//! generator keyed by the seed with stream id `4i + r`. Every path is
//! therefore independent of the partitioning of paths across workers.
//!
//! A path is `value_k = X_k + P_k` where `X` is the shared base (drift,
//! Brownian part, jumps above ε) and `P` the scheme perturbation: zero,
//! `σ(ε)Ŵ`, or the compensated jumps in `(ε_ref, ε]`.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levy_models::{self, GeneratingTriplet, LevyMeasure, Side};
use crate::quadrature;
use crate::stats;

/// Initial cells per side of a jump table; cells are then bisected until the
/// linear interpolation of the CDF is within [`TABLE_TOLERANCE`].
pub const INITIAL_CELLS: usize = 1 << 12;

/// Largest admissible CDF interpolation error of a jump table (in probability).
pub const TABLE_TOLERANCE: f64 = 1e-6;

/// Bisection depth cap per initial cell.
const MAX_REFINE_DEPTH: u32 = 16;

/// Relative jump mass left beyond the upper table cutoff of an unbounded side.
pub const TAIL_CUTOFF: f64 = 1e-12;

/// Largest `f64` below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Stream roles of the counter-based generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    BigJump = 0,
    Brownian = 1,
    GaussianSubstitute = 2,
    Refinement = 3,
}

/// Stream id of `(path, role)`.
pub fn stream_id(path: u64, role: StreamRole) -> u64 {
    path * 4 + role as u64
}

/// Uniform on the open interval `(0, 1)` with 53 random bits.
#[inline]
fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
struct SideTable {
    /// `[cdf, |x|, d|x|/dcdf]` at increasing nodes; `cdf` runs from 0 to 1,
    /// the first node is the band floor and the last one is a sentinel.
    table: Vec<[f64; 3]>,
    /// `guide[j]` is the first cell whose upper CDF exceeds `j/len`.
    guide: Vec<u32>,
    mass: f64,
    /// Largest midpoint interpolation error seen while building (in probability).
    max_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn refine_cell<F: Fn(f64) -> f64>(
    f: &F,
    x0: f64,
    x1: f64,
    mass: f64,
    abs_tol: f64,
    depth: u32,
    out: &mut Vec<(f64, f64)>,
    max_err: &mut f64,
) {
    let mid = if x0 > 0.0 { (x0 * x1).sqrt() } else { 0.5 * (x0 + x1) };
    let left = quadrature::gk15(f, x0, mid).0;
    let right = quadrature::gk15(f, mid, x1).0;
    // Interpolation error at the midpoint of the CDF chord.
    let chord = mass * (mid - x0) / (x1 - x0);
    let err = (left - chord).abs();
    if err > abs_tol && depth < MAX_REFINE_DEPTH {
        refine_cell(f, x0, mid, left, abs_tol, depth + 1, out, max_err);
        refine_cell(f, mid, x1, right, abs_tol, depth + 1, out, max_err);
    } else {
        *max_err = max_err.max(err);
        out.push((x1, left + right));
    }
}

impl SideTable {
    fn build(measure: &LevyMeasure, side: Side, lo: f64, hi: f64) -> Result<Option<SideTable>> {
        let Some((slo, shi)) = measure.support(side) else {
            return Ok(None);
        };
        let a = lo.max(slo);
        let mut b = hi.min(shi);
        if !(b > a) {
            return Ok(None);
        }
        let total = measure.integrate_side(side, |_| 1.0, a, b)?.value;
        if !(total > 0.0) {
            return Ok(None);
        }
        if b.is_infinite() {
            let mut c = (2.0 * a).max(1.0);
            let mut iter = 0;
            while measure.integrate_side(side, |_| 1.0, c, f64::INFINITY)?.value > TAIL_CUTOFF * total {
                c *= 2.0;
                iter += 1;
                if iter > 1000 {
                    return Err(Error::Numerical("jump tail does not decay".into()));
                }
            }
            b = c;
        }
        let n = INITIAL_CELLS;
        let mut nodes: Vec<f64> = if a > 0.0 {
            let (la, lb) = (a.ln(), b.ln());
            (0..=n).map(|i| (la + (lb - la) * i as f64 / n as f64).exp()).collect()
        } else {
            (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
        };
        nodes[0] = a;
        nodes[n] = b;
        nodes.extend(measure.breakpoints(side).into_iter().filter(|x| *x > a && *x < b));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let f = |r: f64| measure.side_density(side, r);
        // The split test uses a quarter of the tolerance as a safety margin.
        let abs_tol = 0.25 * TABLE_TOLERANCE * total;
        let mut cells: Vec<(f64, f64)> = Vec::with_capacity(2 * nodes.len());
        let mut max_err = 0.0f64;
        for w in nodes.windows(2) {
            let m = quadrature::gk15(&f, w[0], w[1]).0;
            refine_cell(&f, w[0], w[1], m, abs_tol, 0, &mut cells, &mut max_err);
        }
        let mut cdf = Vec::with_capacity(cells.len() + 1);
        let mut acc = stats::Compensated::new();
        cdf.push((0.0, a));
        for &(x1, m) in &cells {
            acc.add(m);
            cdf.push((acc.value(), x1));
        }
        let mass = acc.value();
        if !(mass > 0.0) || !mass.is_finite() {
            return Ok(None);
        }
        for e in cdf.iter_mut() {
            e.0 /= mass;
        }
        let n_cells = cdf.len() - 1;
        cdf[n_cells].0 = 1.0;
        let mut table: Vec<[f64; 3]> = cdf
            .windows(2)
            .map(|w| {
                let dc = w[1].0 - w[0].0;
                let slope = if dc > 0.0 { (w[1].1 - w[0].1) / dc } else { 0.0 };
                [w[0].0, w[0].1, slope]
            })
            .collect();
        table.push([1.0, cdf[n_cells].1, 0.0]);
        let mut guide = Vec::with_capacity(n_cells);
        let mut i = 0usize;
        for j in 0..n_cells {
            let level = j as f64 / n_cells as f64;
            while i + 1 < n_cells && table[i + 1][0] <= level {
                i += 1;
            }
            guide.push(i as u32);
        }
        Ok(Some(SideTable {
            table,
            guide,
            mass,
            max_error: max_err / mass,
        }))
    }

    /// Magnitude with CDF `u ∈ (0, 1)`; strictly above the band floor.
    #[inline]
    fn invert(&self, u: f64) -> f64 {
        let cells = self.guide.len();
        let j = ((u * cells as f64) as usize).min(cells - 1);
        let mut i = self.guide[j] as usize;
        // The sentinel has cdf 1 > u, so the scan stops inside the table.
        i += (self.table[i + 1][0] <= u) as usize;
        while self.table[i + 1][0] <= u {
            i += 1;
        }
        let [c0, x0, slope] = self.table[i];
        let x = x0 + (u - c0) * slope;
        let floor = self.table[0][1];
        if x > floor {
            x.min(self.table[i + 1][1])
        } else {
            f64::from_bits(floor.to_bits() + 1)
        }
    }

    fn cutoff(&self) -> f64 {
        self.table[self.table.len() - 1][1]
    }
}

/// Inverse-CDF sampler of `ν` restricted to `lo < |x| <= hi`, normalised.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    pub lo: f64,
    pub hi: f64,
    /// `ν(lo < |x| <= hi)` by quadrature.
    pub lambda: f64,
    /// `∫_{lo<|x|<=hi} x ν(dx)`.
    pub band_mean: f64,
    /// `∫_{lo<|x|<=hi} x² ν(dx)`.
    pub band_second_moment: f64,
    neg: Option<SideTable>,
    pos: Option<SideTable>,
    /// Probability of a negative jump.
    p_neg: f64,
    inv_neg: f64,
    inv_pos: f64,
}

impl JumpSampler {
    pub fn band(measure: &LevyMeasure, lo: f64, hi: f64) -> Result<JumpSampler> {
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("jump band needs 0 <= lo < hi, got ({lo}, {hi})")));
        }
        if lo == 0.0 && !measure.is_finite_activity() {
            return Err(Error::InvalidArgument(
                "a jump band reaching the origin needs a finite-activity measure".into(),
            ));
        }
        let lambda = levy_models::band_mass(measure, lo, hi)?;
        let band_mean = levy_models::band_mean(measure, lo, hi)?;
        let band_second_moment = levy_models::band_moment(measure, 2, lo, hi, false)?;
        let (neg, pos) = if lambda > 0.0 {
            (
                SideTable::build(measure, Side::Negative, lo, hi)?,
                SideTable::build(measure, Side::Positive, lo, hi)?,
            )
        } else {
            (None, None)
        };
        let mn = neg.as_ref().map_or(0.0, |s| s.mass);
        let mp = pos.as_ref().map_or(0.0, |s| s.mass);
        let p_neg = if mn + mp > 0.0 { mn / (mn + mp) } else { 0.0 };
        let lambda = if neg.is_none() && pos.is_none() { 0.0 } else { lambda };
        Ok(JumpSampler {
            lo,
            hi,
            lambda,
            band_mean,
            band_second_moment,
            neg,
            pos,
            p_neg,
            inv_neg: if p_neg > 0.0 { 1.0 / p_neg } else { 0.0 },
            inv_pos: if p_neg < 1.0 { 1.0 / (1.0 - p_neg) } else { 0.0 },
        })
    }

    pub fn is_null(&self) -> bool {
        self.lambda == 0.0
    }

    /// Jump with magnitude in the band from one uniform `u ∈ (0, 1)`.
    #[inline]
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        if u < self.p_neg {
            match &self.neg {
                Some(t) => -t.invert((u * self.inv_neg).min(ONE_BELOW)),
                None => 0.0,
            }
        } else {
            match &self.pos {
                Some(t) => t.invert(((u - self.p_neg) * self.inv_pos).min(ONE_BELOW)),
                None => 0.0,
            }
        }
    }

    #[inline]
    pub fn sample<R: RngCore>(&self, rng: &mut R) -> f64 {
        self.sample_from_uniform(open_uniform(rng))
    }

    /// Largest estimated CDF interpolation error over both sides.
    pub fn interpolation_error(&self) -> f64 {
        let e = |t: &Option<SideTable>| t.as_ref().map_or(0.0, |t| t.max_error);
        e(&self.neg).max(e(&self.pos))
    }

    /// Number of table cells per side `(negative, positive)`.
    pub fn table_cells(&self) -> (usize, usize) {
        let c = |t: &Option<SideTable>| t.as_ref().map_or(0, |t| t.guide.len());
        (c(&self.neg), c(&self.pos))
    }

    /// Largest tabulated magnitude per side `(negative, positive)`.
    pub fn tail_cutoffs(&self) -> (Option<f64>, Option<f64>) {
        (
            self.neg.as_ref().map(SideTable::cutoff),
            self.pos.as_ref().map(SideTable::cutoff),
        )
    }
}

/// Sampler of the retained jumps `|x| > ε`; null when `λ(ε) = 0`.
pub fn build_sampler(measure: &LevyMeasure, eps: f64) -> Result<JumpSampler> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    JumpSampler::band(measure, eps, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// `X^ε`: jumps below ε dropped.
    Truncate,
    /// `X̂^ε = X^ε + σ(ε)Ŵ`.
    Gaussian,
    /// `X^{ε_ref}` built as `X^ε` plus the compensated jumps in `(ε_ref, ε]`.
    /// `ε_ref = 0` (finite activity only) reproduces `X` exactly.
    Refined { eps_ref: f64 },
}

impl Scheme {
    pub fn label(&self) -> String {
        match self {
            Scheme::Truncate => "truncate".into(),
            Scheme::Gaussian => "gaussian".into(),
            Scheme::Refined { eps_ref } => format!("refined({eps_ref:e})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub t: f64,
    pub n_steps: usize,
    pub eps: f64,
    pub scheme: Scheme,
    pub n_paths: usize,
    pub seed: u64,
    pub record_supremum: bool,
    /// Worker threads; 0 uses the ambient rayon pool. Output does not depend on it.
    pub workers: usize,
}

impl PathConfig {
    pub fn new(t: f64, n_steps: usize, eps: f64, scheme: Scheme, n_paths: usize, seed: u64) -> Self {
        PathConfig {
            t,
            n_steps,
            eps,
            scheme,
            n_paths,
            seed,
            record_supremum: true,
            workers: 0,
        }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        PathConfig {
            scheme,
            ..self.clone()
        }
    }

    fn validate(&self, measure: &LevyMeasure) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("t must be > 0, got {}", self.t));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be >= 1".into());
        }
        if self.n_paths == 0 {
            return bad("n_paths must be >= 1".into());
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return bad(format!("eps must lie in (0, 1], got {}", self.eps));
        }
        if let Scheme::Refined { eps_ref } = self.scheme {
            if !(eps_ref >= 0.0 && eps_ref < self.eps) {
                return bad(format!("refined scheme needs 0 <= eps_ref < eps, got {eps_ref}"));
            }
            if eps_ref == 0.0 && !measure.is_finite_activity() {
                return bad("eps_ref = 0 requires a finite-activity measure".into());
            }
        }
        Ok(())
    }
}

/// Simulated paths of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub config: PathConfig,
    pub model: String,
    /// `X_t` of the scheme per path.
    pub terminal: Vec<f64>,
    /// Grid maxima including time 0, when recorded.
    pub supremum: Option<Vec<f64>>,
    /// Terminal value of the perturbation `P` (the simulated residual for
    /// `Refined`, `σ(ε)Ŵ_t` for `Gaussian`, 0 for `Truncate`).
    pub perturbation: Vec<f64>,
    /// Paths whose values left the finite range.
    pub overflow: Vec<bool>,
}

/// Terminal values and grid suprema of a batch.
#[derive(Debug, Clone, Copy)]
pub struct PathFunctionals<'a> {
    pub terminal: &'a [f64],
    pub supremum: &'a [f64],
}

impl PathBatch {
    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }

    pub fn supremum(&self) -> Result<&[f64]> {
        self.supremum.as_deref().ok_or(Error::SupremumNotRecorded)
    }

    pub fn overflow_count(&self) -> usize {
        self.overflow.iter().filter(|o| **o).count()
    }

    /// Stream ids used by path `i`, by role.
    pub fn stream_ids(&self, i: usize) -> [u64; 4] {
        [
            stream_id(i as u64, StreamRole::BigJump),
            stream_id(i as u64, StreamRole::Brownian),
            stream_id(i as u64, StreamRole::GaussianSubstitute),
            stream_id(i as u64, StreamRole::Refinement),
        ]
    }

    /// CSV dump with columns `path_id,terminal,supremum`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "path_id,terminal,supremum")?;
        for i in 0..self.len() {
            let sup = self.supremum.as_ref().map(|s| format!("{:e}", s[i])).unwrap_or_default();
            writeln!(w, "{i},{:e},{sup}", self.terminal[i])?;
        }
        Ok(())
    }
}

pub fn path_functionals(batch: &PathBatch) -> Result<PathFunctionals<'_>> {
    Ok(PathFunctionals {
        terminal: &batch.terminal,
        supremum: batch.supremum()?,
    })
}

/// Per-scheme constants fixed before the path loop.
enum Perturbation {
    None,
    Gaussian { scale: f64 },
    Band { sampler: JumpSampler, drift: f64 },
}

struct Plan {
    n_steps: usize,
    t: f64,
    base_drift: f64,
    b_scale: f64,
    big: JumpSampler,
    perturbations: Vec<Perturbation>,
    record_supremum: bool,
}

struct PathOut {
    terminal: f64,
    supremum: f64,
    perturbation: f64,
    overflow: bool,
}

struct Scratch {
    base: Vec<f64>,
    pert: Vec<f64>,
}

/// Calls `f(step, jump)` for every jump of a compound Poisson process with
/// the sampler's law on `n` equal steps of `[0, t]`.
#[inline]
fn for_each_jump<R: RngCore, F: FnMut(usize, f64)>(rng: &mut R, sampler: &JumpSampler, t: f64, n: usize, mut f: F) {
    if sampler.is_null() {
        return;
    }
    let mean = sampler.lambda * t;
    if mean > n as f64 {
        // Dense regime: a count per step is cheaper than a step index per jump.
        let Ok(per_step) = Poisson::new(mean / n as f64) else {
            return;
        };
        for k in 0..n {
            let count = per_step.sample(rng) as u64;
            for _ in 0..count {
                f(k, sampler.sample(rng));
            }
        }
        return;
    }
    let count = match Poisson::new(mean) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => 0,
    };
    for _ in 0..count {
        let k = (((rng.next_u64() >> 32) * n as u64) >> 32) as usize;
        f(k, sampler.sample(rng));
    }
}

fn add_compound_poisson<R: RngCore>(rng: &mut R, sampler: &JumpSampler, t: f64, bins: &mut [f64]) {
    for_each_jump(rng, sampler, t, bins.len(), |k, x| bins[k] += x);
}

impl Plan {
    fn new(triplet: &GeneratingTriplet, config: &PathConfig, schemes: &[Scheme]) -> Result<Plan> {
        let measure = &triplet.measure;
        let dt = config.t / config.n_steps as f64;
        let big = build_sampler(measure, config.eps)?;
        let comp = levy_models::compensator(measure, config.eps)?;
        let mut perturbations = Vec::with_capacity(schemes.len());
        for scheme in schemes {
            config.with_scheme(*scheme).validate(measure)?;
            perturbations.push(match *scheme {
                Scheme::Truncate => Perturbation::None,
                Scheme::Gaussian => {
                    let s2 = levy_models::truncated_moment(measure, 2, config.eps, false)?;
                    Perturbation::Gaussian {
                        scale: s2.max(0.0).sqrt() * dt.sqrt(),
                    }
                }
                Scheme::Refined { eps_ref } => {
                    let sampler = JumpSampler::band(measure, eps_ref, config.eps)?;
                    Perturbation::Band {
                        drift: -sampler.band_mean * dt,
                        sampler,
                    }
                }
            });
        }
        Ok(Plan {
            n_steps: config.n_steps,
            t: config.t,
            base_drift: (triplet.gamma - comp) * dt,
            b_scale: triplet.b * dt.sqrt(),
            big,
            perturbations,
            record_supremum: config.record_supremum,
        })
    }

    fn run_path(&self, template: &ChaCha8Rng, path: u64, scratch: &mut Scratch) -> Vec<PathOut> {
        let n = self.n_steps;
        let base = &mut scratch.base;
        base.clear();
        base.resize(n, 0.0);
        let mut rng = template.clone();
        rng.set_stream(stream_id(path, StreamRole::BigJump));
        add_compound_poisson(&mut rng, &self.big, self.t, base);
        if self.b_scale > 0.0 {
            let mut rng = template.clone();
            rng.set_stream(stream_id(path, StreamRole::Brownian));
            for inc in base.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *inc += self.base_drift + self.b_scale * z;
            }
        } else {
            for inc in base.iter_mut() {
                *inc += self.base_drift;
            }
        }

        let mut out = Vec::with_capacity(self.perturbations.len());
        for pert in &self.perturbations {
            let p = &mut scratch.pert;
            p.clear();
            p.resize(n, 0.0);
            match pert {
                Perturbation::None => {}
                Perturbation::Gaussian { scale } => {
                    if *scale > 0.0 {
                        let mut rng = template.clone();
                        rng.set_stream(stream_id(path, StreamRole::GaussianSubstitute));
                        for inc in p.iter_mut() {
                            let z: f64 = rng.sample(StandardNormal);
                            *inc = scale * z;
                        }
                    }
                }
                Perturbation::Band { sampler, drift } => {
                    let mut rng = template.clone();
                    rng.set_stream(stream_id(path, StreamRole::Refinement));
                    add_compound_poisson(&mut rng, sampler, self.t, p);
                    for inc in p.iter_mut() {
                        *inc += drift;
                    }
                }
            }
            let (mut x, mut r, mut sup) = (0.0f64, 0.0f64, 0.0f64);
            if self.record_supremum {
                for k in 0..n {
                    x += base[k];
                    r += p[k];
                    sup = sup.max(x + r);
                }
            } else {
                for k in 0..n {
                    x += base[k];
                    r += p[k];
                }
            }
            let terminal = x + r;
            out.push(PathOut {
                terminal,
                supremum: sup,
                perturbation: r,
                overflow: !terminal.is_finite() || !sup.is_finite(),
            });
        }
        out
    }
}

fn run_in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Simulates several schemes on one set of base paths. Batch `j` equals
/// `simulate_paths` with `config.scheme = schemes[j]`, bit for bit.
pub fn simulate_coupled(triplet: &GeneratingTriplet, config: &PathConfig, schemes: &[Scheme]) -> Result<Vec<PathBatch>> {
    config.validate(&triplet.measure)?;
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("at least one scheme is required".into()));
    }
    let plan = Plan::new(triplet, config, schemes)?;
    let template = ChaCha8Rng::seed_from_u64(config.seed);
    let n_steps = config.n_steps;
    let rows: Vec<Vec<PathOut>> = run_in_pool(config.workers, || {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map_init(
                || Scratch {
                    base: Vec::with_capacity(n_steps),
                    pert: Vec::with_capacity(n_steps),
                },
                |scratch, i| plan.run_path(&template, i, scratch),
            )
            .collect()
    })?;
    let mut batches = Vec::with_capacity(schemes.len());
    for (j, scheme) in schemes.iter().enumerate() {
        let n = rows.len();
        let mut terminal = Vec::with_capacity(n);
        let mut supremum = Vec::with_capacity(if config.record_supremum { n } else { 0 });
        let mut perturbation = Vec::with_capacity(n);
        let mut overflow = Vec::with_capacity(n);
        for row in &rows {
            let o = &row[j];
            terminal.push(o.terminal);
            if config.record_supremum {
                supremum.push(o.supremum);
            }
            perturbation.push(o.perturbation);
            overflow.push(o.overflow);
        }
        batches.push(PathBatch {
            config: config.with_scheme(*scheme),
            model: triplet.model.clone(),
            terminal,
            supremum: config.record_supremum.then_some(supremum),
            perturbation,
            overflow,
        });
    }
    Ok(batches)
}

pub fn simulate_paths(triplet: &GeneratingTriplet, config: &PathConfig) -> Result<PathBatch> {
    let mut v = simulate_coupled(triplet, config, &[config.scheme])?;
    Ok(v.remove(0))
}

/// Largest number of distinct levels in one [`simulate_ladder`] call.
pub const MAX_LADDER_LEVELS: usize = 16;

/// Several `(ε, scheme)` batches built from one jump stream.
///
/// Every truncation level in use (each ε, and each `ε_ref` of a refined
/// rung) is obtained by thresholding a single draw of the jumps above the
/// smallest level, so the cost is that of the finest level alone. A refined
/// rung is `X^{ε_ref}` with perturbation `X^{ε_ref}_t - X^ε_t`; a Gaussian
/// rung adds `σ(ε)Ŵ` where `Ŵ` is shared by all Gaussian rungs. Output is
/// not bitwise equal to [`simulate_coupled`], which draws the band below ε
/// from its own stream, but has the same law per batch.
pub fn simulate_ladder(triplet: &GeneratingTriplet, config: &PathConfig, rungs: &[(f64, Scheme)]) -> Result<Vec<PathBatch>> {
    if rungs.is_empty() {
        return Err(Error::InvalidConfig("at least one rung is required".into()));
    }
    let measure = &triplet.measure;
    let mut levels = Vec::with_capacity(2 * rungs.len());
    for &(eps, scheme) in rungs {
        PathConfig {
            eps,
            scheme,
            ..config.clone()
        }
        .validate(measure)?;
        levels.push(eps);
        if let Scheme::Refined { eps_ref } = scheme {
            levels.push(eps_ref);
        }
    }
    // Distinct levels, descending.
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let m = levels.len();
    if m > MAX_LADDER_LEVELS {
        return Err(Error::InvalidConfig(format!(
            "at most {MAX_LADDER_LEVELS} distinct levels per ladder, got {m}"
        )));
    }
    let level_of = |l: f64| levels.iter().position(|&s| s == l).expect("level present");
    let mut padded = [f64::INFINITY; MAX_LADDER_LEVELS];
    padded[..m].copy_from_slice(&levels);
    let sampler = JumpSampler::band(measure, levels[m - 1], f64::INFINITY)?;
    let n = config.n_steps;
    let dt = config.t / n as f64;
    let mut drifts = Vec::with_capacity(m);
    for &l in &levels {
        drifts.push((triplet.gamma - levy_models::compensator(measure, l)?) * dt);
    }
    // Per rung: (level index, reference level index, Gaussian scale).
    let mut plan = Vec::with_capacity(rungs.len());
    for &(eps, scheme) in rungs {
        plan.push(match scheme {
            Scheme::Truncate => (level_of(eps), level_of(eps), 0.0),
            Scheme::Refined { eps_ref } => (level_of(eps_ref), level_of(eps), 0.0),
            Scheme::Gaussian => {
                let s2 = levy_models::truncated_moment(measure, 2, eps, false)?;
                (level_of(eps), level_of(eps), s2.max(0.0).sqrt() * dt.sqrt())
            }
        });
    }
    let any_gaussian = plan.iter().any(|p| p.2 > 0.0);
    let b_scale = triplet.b * dt.sqrt();
    let template = ChaCha8Rng::seed_from_u64(config.seed);
    let record = config.record_supremum;

    let run = |buf: &mut Vec<f64>, path: u64| -> Vec<PathOut> {
        buf.clear();
        buf.resize(m * n + 2 * n, 0.0);
        let (jumps, rest) = buf.split_at_mut(m * n);
        let (brown, gauss) = rest.split_at_mut(n);
        let mut rng = template.clone();
        rng.set_stream(stream_id(path, StreamRole::BigJump));
        // jumps[k*m + j] collects the jumps of step k above level j, summed
        // per step with masked adds so no store index depends on a jump.
        let mut current = usize::MAX;
        let mut acc = [0.0f64; MAX_LADDER_LEVELS];
        let mut flush = |k: usize, acc: &mut [f64; MAX_LADDER_LEVELS]| {
            if k != usize::MAX {
                for (dst, a) in jumps[k * m..(k + 1) * m].iter_mut().zip(acc.iter()) {
                    *dst += *a;
                }
            }
            *acc = [0.0; MAX_LADDER_LEVELS];
        };
        for_each_jump(&mut rng, &sampler, config.t, n, |k, x| {
            if k != current {
                flush(current, &mut acc);
                current = k;
            }
            let a = x.abs();
            for (s, l) in acc.iter_mut().zip(&padded) {
                *s += if a > *l { x } else { 0.0 };
            }
        });
        flush(current, &mut acc);
        if b_scale > 0.0 {
            let mut rng = template.clone();
            rng.set_stream(stream_id(path, StreamRole::Brownian));
            for w in brown.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *w = b_scale * z;
            }
        }
        if any_gaussian {
            let mut rng = template.clone();
            rng.set_stream(stream_id(path, StreamRole::GaussianSubstitute));
            for w in gauss.iter_mut() {
                *w = rng.sample(StandardNormal);
            }
        }
        let mut x = vec![0.0f64; m];
        let mut w_hat = 0.0f64;
        let mut sup = vec![0.0f64; plan.len()];
        for k in 0..n {
            for j in 0..m {
                x[j] += drifts[j] + brown[k] + jumps[k * m + j];
            }
            w_hat += gauss[k];
            if record {
                for (s, &(j, _, g)) in sup.iter_mut().zip(&plan) {
                    *s = s.max(x[j] + g * w_hat);
                }
            }
        }
        plan.iter()
            .zip(&sup)
            .map(|(&(j, r, g), &s)| {
                let terminal = x[j] + g * w_hat;
                PathOut {
                    terminal,
                    supremum: s,
                    perturbation: terminal - x[r],
                    overflow: !terminal.is_finite() || !s.is_finite(),
                }
            })
            .collect()
    };
    let rows: Vec<Vec<PathOut>> = run_in_pool(config.workers, || {
        (0..config.n_paths as u64)
            .into_par_iter()
            .map_init(|| Vec::with_capacity((m + 2) * n), |buf, i| run(buf, i))
            .collect()
    })?;
    let batches = rungs
        .iter()
        .enumerate()
        .map(|(r, &(eps, scheme))| PathBatch {
            config: PathConfig {
                eps,
                scheme,
                ..config.clone()
            },
            model: triplet.model.clone(),
            terminal: rows.iter().map(|row| row[r].terminal).collect(),
            supremum: record.then(|| rows.iter().map(|row| row[r].supremum).collect()),
            perturbation: rows.iter().map(|row| row[r].perturbation).collect(),
            overflow: rows.iter().map(|row| row[r].overflow).collect(),
        })
        .collect();
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_models::make_model;

    fn cgmy() -> GeneratingTriplet {
        make_model("cgmy", &[("C", 1.0), ("G", 5.0), ("M", 5.0), ("Y", 1.2)]).unwrap()
    }

    #[test]
    fn stable_like_sampler_median() {
        let m = make_model("alpha_stable_like", &[("alpha", 1.0)]).unwrap();
        let s = build_sampler(&m.measure, 0.5).unwrap();
        assert!((s.lambda - 2.0).abs() < 1e-10);
        // 1/0.5 - 1/m = 0.5 per side at the side median.
        assert!((s.sample_from_uniform(0.25) + 2.0 / 3.0).abs() < 1e-6);
        assert!((s.sample_from_uniform(0.75) - 2.0 / 3.0).abs() < 1e-6);
        assert!(s.sample_from_uniform(1e-15).abs() <= 1.0);
        assert!(s.sample_from_uniform(0.5 + 1e-15).abs() > 0.5);
    }

    #[test]
    fn table_interpolation_error_is_below_tolerance() {
        // Closed-form side CDF of |x|^{-2} on (ε, 1]: (1/ε - 1/x)/(1/ε - 1).
        let m = make_model("alpha_stable_like", &[("alpha", 1.0)]).unwrap();
        let eps = 1e-3;
        let s = JumpSampler::band(&m.measure, eps, 1.0).unwrap();
        assert!(s.interpolation_error() <= TABLE_TOLERANCE);
        let table = s.pos.as_ref().unwrap();
        let exact = |x: f64| (1.0 / eps - 1.0 / x) / (1.0 / eps - 1.0);
        let mut worst = 0.0f64;
        for k in 1..200_000 {
            let u = k as f64 / 200_000.0;
            worst = worst.max((exact(table.invert(u)) - u).abs());
        }
        assert!(worst <= TABLE_TOLERANCE, "{worst}");
    }

    #[test]
    fn uniform_sampler_beyond_support_is_null() {
        let u = make_model("uniform_finite", &[("height", 5.0), ("halfwidth", 0.1)]).unwrap();
        assert!(build_sampler(&u.measure, 0.1).unwrap().is_null());
        assert!(build_sampler(&u.measure, 0.3).unwrap().is_null());
    }

    #[test]
    fn cgmy_sampler_moments_match_quadrature() {
        let t = cgmy();
        let s = build_sampler(&t.measure, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        assert!(xs.iter().all(|x| x.abs() > 0.01));
        let (mean, se) = stats::mean_stderr(&xs);
        let target = s.band_mean / s.lambda;
        assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target} ± {se}");
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m2, se2) = stats::mean_stderr(&sq);
        let target2 = s.band_second_moment / s.lambda;
        assert!((m2 - target2).abs() < 4.0 * se2, "{m2} vs {target2} ± {se2}");
    }

    #[test]
    fn deterministic_drift_paths() {
        let up = GeneratingTriplet::brownian(1.0, 0.0).unwrap();
        let cfg = PathConfig::new(1.0, 16, 0.1, Scheme::Truncate, 3, 1);
        let b = simulate_paths(&up, &cfg).unwrap();
        for i in 0..3 {
            assert!((b.terminal[i] - 1.0).abs() < 1e-14);
            assert!((b.supremum().unwrap()[i] - 1.0).abs() < 1e-14);
        }
        let down = GeneratingTriplet::brownian(-1.0, 0.0).unwrap();
        let b = simulate_paths(&down, &cfg).unwrap();
        assert_eq!(b.supremum().unwrap()[0], 0.0);
    }

    #[test]
    fn supremum_not_recorded_is_an_error() {
        let bm = GeneratingTriplet::brownian(0.0, 1.0).unwrap();
        let mut cfg = PathConfig::new(1.0, 4, 0.1, Scheme::Truncate, 10, 1);
        cfg.record_supremum = false;
        let b = simulate_paths(&bm, &cfg).unwrap();
        assert_eq!(b.supremum(), Err(Error::SupremumNotRecorded));
        assert!(path_functionals(&b).is_err());
    }

    #[test]
    fn brownian_terminal_is_centred() {
        let bm = GeneratingTriplet::brownian(0.0, 1.0).unwrap();
        let b = simulate_paths(&bm, &PathConfig::new(1.0, 1, 0.1, Scheme::Truncate, 100_000, 3)).unwrap();
        let (m, se) = stats::mean_stderr(&b.terminal);
        assert!(m.abs() < 4.0 * se);
        assert!((se * (100_000f64).sqrt() - 1.0).abs() < 0.02);
    }

    #[test]
    fn coupled_run_matches_separate_runs_bitwise() {
        let t = cgmy().with_diffusion(0.1, 0.2).unwrap();
        let cfg = PathConfig::new(1.0, 32, 0.1, Scheme::Truncate, 500, 11);
        let schemes = [Scheme::Truncate, Scheme::Gaussian, Scheme::Refined { eps_ref: 0.02 }];
        let coupled = simulate_coupled(&t, &cfg, &schemes).unwrap();
        for (j, s) in schemes.iter().enumerate() {
            let single = simulate_paths(&t, &cfg.with_scheme(*s)).unwrap();
            assert_eq!(single, coupled[j]);
        }
        // Refined terminal = truncated terminal + residual, path by path.
        for i in 0..500 {
            assert_eq!(coupled[2].terminal[i], coupled[0].terminal[i] + coupled[2].perturbation[i]);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let t = cgmy();
        let mut cfg = PathConfig::new(1.0, 16, 0.05, Scheme::Refined { eps_ref: 0.01 }, 300, 5);
        cfg.workers = 1;
        let a = simulate_paths(&t, &cfg).unwrap();
        cfg.workers = 3;
        let b = simulate_paths(&t, &cfg).unwrap();
        assert_eq!(a.terminal, b.terminal);
        assert_eq!(a.supremum, b.supremum);
        assert_eq!(a.perturbation, b.perturbation);
    }

    #[test]
    fn invalid_configs() {
        let t = cgmy();
        let cfg = PathConfig::new(1.0, 0, 0.1, Scheme::Truncate, 10, 1);
        assert!(matches!(simulate_paths(&t, &cfg), Err(Error::InvalidConfig(_))));
        let cfg = PathConfig::new(1.0, 4, 0.1, Scheme::Refined { eps_ref: 0.2 }, 10, 1);
        assert!(matches!(simulate_paths(&t, &cfg), Err(Error::InvalidConfig(_))));
        let cfg = PathConfig::new(1.0, 4, 0.1, Scheme::Refined { eps_ref: 0.0 }, 10, 1);
        assert!(matches!(simulate_paths(&t, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn ladder_levels_match_coupled_law() {
        let t = cgmy();
        let cfg = PathConfig::new(1.0, 64, 0.1, Scheme::Truncate, 4000, 11);
        let rungs = [
            (0.1, Scheme::Truncate),
            (0.1, Scheme::Refined { eps_ref: 0.02 }),
            (0.1, Scheme::Gaussian),
        ];
        let ladder = simulate_ladder(&t, &cfg, &rungs).unwrap();
        let coupled = simulate_coupled(&t, &cfg, &[Scheme::Truncate, Scheme::Refined { eps_ref: 0.02 }, Scheme::Gaussian]).unwrap();
        for (a, b) in ladder.iter().zip(&coupled) {
            assert_eq!(a.config.scheme, b.config.scheme);
            let (ma, sa) = stats::mean_stderr(a.supremum().unwrap());
            let (mb, sb) = stats::mean_stderr(b.supremum().unwrap());
            assert!((ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
        }
        // A refined perturbation is the difference of two ladder levels.
        for i in 0..cfg.n_paths {
            let d = ladder[1].terminal[i] - ladder[0].terminal[i];
            assert!((ladder[1].perturbation[i] - d).abs() < 1e-12);
        }
        assert!(ladder[0].perturbation.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn ladder_is_worker_invariant() {
        let t = cgmy();
        let mut cfg = PathConfig::new(1.0, 32, 0.1, Scheme::Truncate, 300, 5);
        let rungs = [(0.1, Scheme::Refined { eps_ref: 0.01 }), (0.05, Scheme::Gaussian)];
        let a = simulate_ladder(&t, &cfg, &rungs).unwrap();
        cfg.workers = 3;
        let b = simulate_ladder(&t, &cfg, &rungs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.terminal, y.terminal);
            assert_eq!(x.supremum, y.supremum);
        }
    }

    #[test]
    fn ladder_rejects_bad_rungs() {
        let t = cgmy();
        let cfg = PathConfig::new(1.0, 8, 0.1, Scheme::Truncate, 10, 1);
        assert!(simulate_ladder(&t, &cfg, &[]).is_err());
        assert!(simulate_ladder(&t, &cfg, &[(0.1, Scheme::Refined { eps_ref: 0.0 })]).is_err());
        let many: Vec<(f64, Scheme)> = (1..=17).map(|k| (k as f64 / 20.0, Scheme::Truncate)).collect();
        assert!(simulate_ladder(&t, &cfg, &many).is_err());
    }
}
