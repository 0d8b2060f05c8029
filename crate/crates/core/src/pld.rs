//! Discretized privacy loss distributions (PLDs): construction from mixture
//! pairs, public mixtures over branches, self-composition, and hockey-stick
//! queries.
//!
//! A PLD here is the law of `L = ln(P(t)/Q(t))` for `t ~ P`, placed on the
//! grid `k * grid_step`, with an extra atom at `L = +inf`. Pessimistic PLDs
//! round every loss up (and send unresolved upper tails to `+inf`), so every
//! `delta` they report upper-bounds the exact one; optimistic PLDs round down.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::binom::TruncatedPoissonParams;
use crate::error::{Error, Result};
use crate::fft;
use crate::math::{abs, ceil, exp, expm1, floor, ln, KahanSum, TailValue};
use crate::pairs::{build_pair, poisson_pair, Adjacency, BranchedDominatingPair, GaussianMixture, MixturePair};

/// Default width of the privacy-loss grid.
pub const DEFAULT_GRID_STEP: f64 = 1e-4;

/// Probability mass that composition may trim from each tail.
pub const TAIL_MASS_TRUNCATION: f64 = 1e-15;

/// Half-width, in standard deviations, of the window around the mixture
/// means that is resolved exactly; the P-mass outside is below 2e-17.
const WINDOW_SIGMAS: f64 = 8.5;

/// Samples used to locate turning points of the privacy loss.
const MONOTONE_PROBES: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimate {
    Pessimistic,
    Optimistic,
}

impl Estimate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimate::Pessimistic => "pessimistic",
            Estimate::Optimistic => "optimistic",
        }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pessimistic" => Ok(Estimate::Pessimistic),
            "optimistic" => Ok(Estimate::Optimistic),
            _ => Err(Error::InvalidParameter {
                name: "estimate",
                reason: "expected pessimistic or optimistic",
            }),
        }
    }
}

/// Which domination direction(s) a reported guarantee covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionPolicy {
    /// Worst case over `(P, Q)` and `(Q, P)`.
    MaxOfBoth,
    Forward,
    Reverse,
}

impl DirectionPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            DirectionPolicy::MaxOfBoth => "max",
            DirectionPolicy::Forward => "forward",
            DirectionPolicy::Reverse => "reverse",
        }
    }
}

impl fmt::Display for DirectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DirectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(DirectionPolicy::MaxOfBoth),
            "forward" => Ok(DirectionPolicy::Forward),
            "reverse" => Ok(DirectionPolicy::Reverse),
            _ => Err(Error::InvalidParameter {
                name: "direction",
                reason: "expected one of max, forward, reverse",
            }),
        }
    }
}

/// Privacy loss distribution on a uniform grid with an atom at `+inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePld {
    grid_step: f64,
    /// Grid index of `masses[0]`; bucket `i` sits at loss `(lowest_index + i) * grid_step`.
    lowest_index: i64,
    masses: Vec<f64>,
    infinity_mass: f64,
    estimate: Estimate,
}

impl DiscretePld {
    /// All mass at loss zero: the PLD of two identical distributions.
    pub fn identity(grid_step: f64, estimate: Estimate) -> Self {
        Self {
            grid_step,
            lowest_index: 0,
            masses: vec![1.0],
            infinity_mass: 0.0,
            estimate,
        }
    }

    /// Builds a PLD from raw buckets, trimming zero buckets at both ends.
    pub fn from_masses(
        grid_step: f64,
        lowest_index: i64,
        masses: Vec<f64>,
        infinity_mass: f64,
        estimate: Estimate,
    ) -> Result<Self> {
        check_grid_step(grid_step)?;
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) || !(0.0..=1.0).contains(&infinity_mass) {
            return Err(Error::InvalidParameter {
                name: "masses",
                reason: "masses must be nonnegative probabilities",
            });
        }
        let total: f64 = masses.iter().sum::<f64>() + infinity_mass;
        if abs(total - 1.0) > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "masses",
                reason: "masses must sum to one",
            });
        }
        Ok(Self::trimmed(grid_step, lowest_index, masses, infinity_mass, estimate))
    }

    fn trimmed(
        grid_step: f64,
        lowest_index: i64,
        mut masses: Vec<f64>,
        infinity_mass: f64,
        estimate: Estimate,
    ) -> Self {
        let first = masses.iter().position(|&m| m > 0.0);
        let (lowest_index, masses) = match first {
            None => (0, Vec::new()),
            Some(first) => {
                let last = masses.iter().rposition(|&m| m > 0.0).unwrap_or(first);
                masses.truncate(last + 1);
                masses.drain(..first);
                (lowest_index + first as i64, masses)
            }
        };
        Self {
            grid_step,
            lowest_index,
            masses,
            infinity_mass,
            estimate,
        }
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn lowest_index(&self) -> i64 {
        self.lowest_index
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    pub fn estimate(&self) -> Estimate {
        self.estimate
    }

    /// Loss value of bucket `i`.
    pub fn loss_at(&self, i: usize) -> f64 {
        (self.lowest_index + i as i64) as f64 * self.grid_step
    }

    /// Finite plus infinite mass.
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.infinity_mass
    }

    fn highest_index(&self) -> i64 {
        self.lowest_index + self.masses.len() as i64 - 1
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid_step != other.grid_step || self.estimate != other.estimate {
            Err(Error::GridMismatch)
        } else {
            Ok(())
        }
    }

    /// Hockey-stick divergence `E[(1 - e^(eps - L))_+]`, including the
    /// infinite atom.
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        let mut sum = KahanSum::default();
        for (i, &m) in self.masses.iter().enumerate().rev() {
            let loss = self.loss_at(i);
            if loss <= epsilon {
                break;
            }
            sum.add(-expm1(epsilon - loss) * m);
        }
        (sum.value() + self.infinity_mass).clamp(0.0, 1.0)
    }

    /// Smallest `eps >= 0` with `delta_at(eps) <= delta`, or `+inf` when
    /// `delta` does not exceed the infinite atom.
    ///
    /// Between adjacent grid losses `delta_at` has the closed form
    /// `U - e^eps V`, so the crossing is solved exactly on the bracketing
    /// segment.
    pub fn epsilon_at(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "delta must lie in (0, 1]",
            });
        }
        if delta <= self.infinity_mass {
            return Ok(f64::INFINITY);
        }
        if self.delta_at(0.0) <= delta {
            return Ok(0.0);
        }
        // U = infinite atom + mass above eps, V = sum of m e^(-L) above eps
        let mut upper = self.infinity_mass;
        let mut lower = 0.0;
        for i in (0..self.masses.len()).rev() {
            let loss = self.loss_at(i);
            if loss <= 0.0 {
                break;
            }
            let m = self.masses[i];
            upper += m;
            lower += m * exp(-loss);
            let floor_loss = if i > 0 { self.loss_at(i - 1).max(0.0) } else { 0.0 };
            if upper > delta && lower > 0.0 {
                let eps = ln((upper - delta) / lower);
                if eps >= floor_loss {
                    return Ok(eps.min(loss));
                }
            }
        }
        // delta_at(0) > delta guarantees a crossing above; reached only
        // through round-off at the bottom segment
        Ok(0.0)
    }
}

fn check_grid_step(grid_step: f64) -> Result<()> {
    if grid_step > 0.0 && grid_step <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain("grid_step must lie in (0, 1]"))
    }
}

/// Running mixture CDF that yields the mass between consecutive points.
struct MassCursor<'a> {
    mixture: &'a GaussianMixture,
    at: Vec<TailValue>,
}

impl<'a> MassCursor<'a> {
    fn new(mixture: &'a GaussianMixture, t: f64) -> Self {
        let mut cursor = Self {
            mixture,
            at: Vec::with_capacity(mixture.components().len()),
        };
        cursor.at = cursor.values(t);
        cursor
    }

    fn values(&self, t: f64) -> Vec<TailValue> {
        let s = self.mixture.sigma();
        self.mixture
            .components()
            .iter()
            .map(|c| TailValue::at((t - c.mean) / s))
            .collect()
    }

    /// Mass of `(current, t]`; moves the cursor to `t`.
    fn advance(&mut self, t: f64) -> f64 {
        let mut mass = 0.0;
        let s = self.mixture.sigma();
        for (slot, c) in self.at.iter_mut().zip(self.mixture.components()) {
            let next = TailValue::at((t - c.mean) / s);
            mass += c.weight * slot.mass_to(next);
            *slot = next;
        }
        mass
    }
}

/// Limit of the privacy loss as `t -> -inf` (`upper = false`) or `+inf`.
fn tail_limit(pair: &MixturePair, upper: bool) -> f64 {
    let pick = |m: &GaussianMixture| {
        let c = if upper {
            m.components()[m.components().len() - 1]
        } else {
            m.components()[0]
        };
        (c.mean, c.weight)
    };
    let (mp, wp) = pick(pair.p());
    let (mq, wq) = pick(pair.q());
    let p_dominates = if upper { mp > mq } else { mp < mq };
    if mp == mq {
        ln(wp / wq)
    } else if p_dominates {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Points splitting `[a, b]` into pieces on which the privacy loss is monotone.
fn monotone_breaks(pair: &MixturePair, a: f64, b: f64) -> Vec<f64> {
    let spread = (pair.p().max_mean().max(pair.q().max_mean()) - pair.p().min_mean().min(pair.q().min_mean())).max(1.0);
    let noise = 1e-12 * spread / (pair.sigma() * pair.sigma());
    let sign = |t: f64| {
        let d = pair.loss_and_slope(t).1;
        if d > noise {
            1i8
        } else if d < -noise {
            -1
        } else {
            0
        }
    };
    let mut breaks = vec![a];
    let step = (b - a) / MONOTONE_PROBES as f64;
    let mut last: Option<(f64, i8)> = None;
    for i in 0..=MONOTONE_PROBES {
        let t = a + step * i as f64;
        let s = sign(t);
        if s == 0 {
            continue;
        }
        if let Some((t0, s0)) = last {
            if s0 != s {
                let (mut lo, mut hi) = (t0, t);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if sign(mid) == s0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                breaks.push(0.5 * (lo + hi));
            }
        }
        last = Some((t, s));
    }
    if breaks.last().map_or(true, |&l| l < b) {
        breaks.push(b);
    }
    breaks
}

/// Solves `L(t) = target` on `[lo, hi]`, where `L - target` changes sign
/// in the direction given by `increasing`. Safeguarded Newton.
fn solve_level(
    pair: &MixturePair,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
    guess: f64,
    tol: f64,
) -> (f64, f64, f64) {
    let sgn = if increasing { 1.0 } else { -1.0 };
    let mut t = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let (l, d) = pair.loss_and_slope(t);
        let f = (l - target) * sgn;
        if abs(f) <= tol {
            return (t, l, d);
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + abs(t)) {
            return (t, l, d);
        }
        let slope = d * sgn;
        let newton = t - f / slope;
        t = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (l, d) = pair.loss_and_slope(t);
    (t, l, d)
}

/// Dense accumulator over grid indices.
struct Buckets {
    lowest: i64,
    masses: Vec<f64>,
}

impl Buckets {
    fn new(lowest: i64, highest: i64) -> Self {
        Self {
            lowest,
            masses: vec![0.0; (highest - lowest + 1) as usize],
        }
    }

    #[inline]
    fn add(&mut self, index: i64, mass: f64) {
        let i = (index - self.lowest).clamp(0, self.masses.len() as i64 - 1);
        self.masses[i as usize] += mass;
    }
}

/// Grid index for a loss range `[lo, hi]` (in units of `grid_step`):
/// rounded up from the top for pessimistic, down from the bottom otherwise.
#[inline]
fn bucket_for(lo: f64, hi: f64, estimate: Estimate) -> i64 {
    match estimate {
        Estimate::Pessimistic => ceil(hi) as i64,
        Estimate::Optimistic => floor(lo) as i64,
    }
}

/// Discretizes the privacy loss of `pair` onto the grid `k * grid_step`.
///
/// The loss is resolved exactly on a window of `WINDOW_SIGMAS` standard
/// deviations around all means: on each monotone piece the grid-level
/// crossings are located and the P-mass between consecutive crossings goes
/// to one bucket. Mass outside the window is placed using the limiting loss
/// in that tail.
pub fn discretize(pair: &MixturePair, grid_step: f64, estimate: Estimate) -> Result<DiscretePld> {
    check_grid_step(grid_step)?;
    if pair.is_trivial() {
        return Ok(DiscretePld::identity(grid_step, estimate));
    }
    let sigma = pair.sigma();
    let a = pair.p().min_mean().min(pair.q().min_mean()) - WINDOW_SIGMAS * sigma;
    let b = pair.p().max_mean().max(pair.q().max_mean()) + WINDOW_SIGMAS * sigma;
    let breaks = monotone_breaks(pair, a, b);
    let levels: Vec<f64> = breaks.iter().map(|&t| pair.privacy_loss(t) / grid_step).collect();

    let left_limit = tail_limit(pair, false) / grid_step;
    let right_limit = tail_limit(pair, true) / grid_step;
    let (la, lb) = (levels[0], levels[levels.len() - 1]);

    let mut lowest = i64::MAX;
    let mut highest = i64::MIN;
    for &l in levels.iter().chain([left_limit, right_limit].iter()) {
        if l.is_finite() {
            lowest = lowest.min(floor(l) as i64);
            highest = highest.max(ceil(l) as i64);
        }
    }
    let mut buckets = Buckets::new(lowest, highest);
    let mut infinity_mass = 0.0;
    let mut cursor = MassCursor::new(pair.p(), f64::NEG_INFINITY);

    // outer tails: the loss there lies between the window edge and the limit
    let place_tail = |buckets: &mut Buckets, edge: f64, limit: f64, mass: f64, infinity: &mut f64| {
        let (lo, hi) = (edge.min(limit), edge.max(limit));
        match estimate {
            Estimate::Pessimistic if hi == f64::INFINITY => *infinity += mass,
            Estimate::Optimistic if lo == f64::NEG_INFINITY => buckets.add(lowest, mass),
            _ => buckets.add(bucket_for(lo, hi, estimate), mass),
        }
    };
    let left_mass = cursor.advance(a);
    place_tail(&mut buckets, la, left_limit, left_mass, &mut infinity_mass);

    let tol = 1e-9 * grid_step;
    for w in 0..breaks.len() - 1 {
        let (u, v) = (breaks[w], breaks[w + 1]);
        let (lu, lv) = (levels[w], levels[w + 1]);
        let increasing = lv >= lu;
        // integer levels strictly between lu and lv, in traversal order
        let (first, last) = if increasing {
            (floor(lu) as i64 + 1, ceil(lv) as i64 - 1)
        } else {
            (ceil(lu) as i64 - 1, floor(lv) as i64 + 1)
        };
        let count = if increasing { last - first + 1 } else { first - last + 1 };
        let mut t_prev = u;
        let mut level_prev = lu;
        let (mut l_prev, mut d_prev) = pair.loss_and_slope(u);
        for step in 0..count.max(0) {
            let j = if increasing { first + step } else { first - step };
            let target = j as f64 * grid_step;
            let guess = if d_prev != 0.0 {
                t_prev + (target - l_prev) / d_prev
            } else {
                f64::NAN
            };
            let (t, l, d) = solve_level(pair, target, t_prev, v, increasing, guess, tol);
            let mass = cursor.advance(t);
            let jf = j as f64;
            buckets.add(bucket_for(level_prev.min(jf), level_prev.max(jf), estimate), mass);
            t_prev = t;
            level_prev = jf;
            l_prev = l;
            d_prev = d;
        }
        let mass = cursor.advance(v);
        buckets.add(bucket_for(level_prev.min(lv), level_prev.max(lv), estimate), mass);
    }

    let right_mass = cursor.advance(f64::INFINITY);
    place_tail(&mut buckets, lb, right_limit, right_mass, &mut infinity_mass);

    Ok(DiscretePld::trimmed(
        grid_step,
        buckets.lowest,
        buckets.masses,
        infinity_mass,
        estimate,
    ))
}

/// Public mixture of PLDs: when the mixture index is released, the PLD of
/// the mixed mechanism is the weighted sum of the branch PLDs.
pub fn mix(plds: &[DiscretePld], weights: &[f64]) -> Result<DiscretePld> {
    let (first, rest) = plds.split_first().ok_or(Error::InvalidParameter {
        name: "plds",
        reason: "mixture needs at least one component",
    })?;
    if plds.len() != weights.len() {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "one weight per PLD required",
        });
    }
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || abs(weights.iter().sum::<f64>() - 1.0) > 1e-12 {
        return Err(Error::InvalidParameter {
            name: "weights",
            reason: "mixture weights must be probabilities summing to one",
        });
    }
    for p in rest {
        first.check_compatible(p)?;
    }
    let nonempty = || plds.iter().filter(|p| !p.masses.is_empty());
    let lowest = nonempty().map(|p| p.lowest_index).min().unwrap_or(0);
    let highest = nonempty().map(|p| p.highest_index()).max().unwrap_or(-1);
    let mut masses = vec![0.0; (highest - lowest + 1).max(0) as usize];
    let mut infinity_mass = 0.0;
    for (p, &w) in plds.iter().zip(weights) {
        let offset = (p.lowest_index - lowest) as usize;
        for (slot, &m) in masses[offset..].iter_mut().zip(&p.masses) {
            *slot += w * m;
        }
        infinity_mass += w * p.infinity_mass;
    }
    Ok(DiscretePld::trimmed(
        first.grid_step,
        lowest,
        masses,
        infinity_mass,
        first.estimate,
    ))
}

/// Trims up to `TAIL_MASS_TRUNCATION / 2` from each end. Pessimistic PLDs
/// move the lower tail up into the first kept bucket and the upper tail to
/// `+inf`; optimistic PLDs drop the lower tail and move the upper tail down
/// into the last kept bucket.
fn truncate_tails(lowest: i64, masses: Vec<f64>, estimate: Estimate) -> (i64, Vec<f64>, f64) {
    let budget = TAIL_MASS_TRUNCATION / 2.0;
    let mut left = 0usize;
    let mut left_mass = 0.0;
    while left + 1 < masses.len() && left_mass + masses[left] <= budget {
        left_mass += masses[left];
        left += 1;
    }
    let mut right = masses.len();
    let mut right_mass = 0.0;
    while right > left + 1 && right_mass + masses[right - 1] <= budget {
        right_mass += masses[right - 1];
        right -= 1;
    }
    let mut kept = masses[left..right].to_vec();
    let extra_infinity = match estimate {
        Estimate::Pessimistic => {
            kept[0] += left_mass;
            right_mass
        }
        Estimate::Optimistic => {
            let last = kept.len() - 1;
            kept[last] += right_mass;
            0.0
        }
    };
    (lowest + left as i64, kept, extra_infinity)
}

/// PLD of the adaptive composition of two mechanisms.
pub fn convolve(a: &DiscretePld, b: &DiscretePld) -> Result<DiscretePld> {
    a.check_compatible(b)?;
    let infinity = a.infinity_mass + b.infinity_mass - a.infinity_mass * b.infinity_mass;
    if a.masses.is_empty() || b.masses.is_empty() {
        return Ok(DiscretePld::trimmed(a.grid_step, 0, Vec::new(), infinity, a.estimate));
    }
    let raw = fft::convolve(&a.masses, &b.masses);
    // mass zeroed as round-off is charged to +inf when pessimistic
    let lost = match a.estimate {
        Estimate::Pessimistic => {
            let want = a.masses.iter().sum::<f64>() * b.masses.iter().sum::<f64>();
            (want - raw.iter().sum::<f64>()).max(0.0)
        }
        Estimate::Optimistic => 0.0,
    };
    let (lowest, kept, extra) = truncate_tails(a.lowest_index + b.lowest_index, raw, a.estimate);
    Ok(DiscretePld::trimmed(
        a.grid_step,
        lowest,
        kept,
        (infinity + extra + lost).min(1.0),
        a.estimate,
    ))
}

/// `steps`-fold self-composition by repeated squaring.
pub fn compose(pld: &DiscretePld, steps: u64) -> Result<DiscretePld> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "number of compositions must be at least 1",
        });
    }
    let mut result: Option<DiscretePld> = None;
    let mut base = pld.clone();
    let mut k = steps;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => convolve(&r, &base)?,
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        base = convolve(&base, &base)?;
    }
    Ok(result.unwrap_or_else(|| pld.clone()))
}

/// Either side of an `(eps, delta)` query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Query {
    /// Report `delta` at this `epsilon`.
    Delta { epsilon: f64 },
    /// Report the smallest `epsilon` achieving this `delta`.
    Epsilon { delta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccountingOptions {
    pub grid_step: f64,
    pub direction: DirectionPolicy,
    pub estimate: Estimate,
}

impl Default for AccountingOptions {
    fn default() -> Self {
        Self {
            grid_step: DEFAULT_GRID_STEP,
            direction: DirectionPolicy::MaxOfBoth,
            estimate: Estimate::Pessimistic,
        }
    }
}

/// Composed PLDs for the selected domination direction(s); answers
/// `delta(eps)` and `eps(delta)` as the worst case over them.
#[derive(Clone, Debug)]
pub struct PrivacyProfile {
    plds: Vec<DiscretePld>,
}

impl PrivacyProfile {
    pub fn plds(&self) -> &[DiscretePld] {
        &self.plds
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        self.plds.iter().map(|p| p.delta_at(epsilon)).fold(0.0, f64::max)
    }

    pub fn epsilon(&self, delta: f64) -> Result<f64> {
        let mut eps = 0.0f64;
        for p in &self.plds {
            eps = eps.max(p.epsilon_at(delta)?);
        }
        Ok(eps)
    }

    fn build<F>(options: &AccountingOptions, steps: u64, single: F) -> Result<Self>
    where
        F: Fn(bool) -> Result<DiscretePld>,
    {
        check_grid_step(options.grid_step)?;
        let directions: &[bool] = match options.direction {
            DirectionPolicy::MaxOfBoth => &[false, true],
            DirectionPolicy::Forward => &[false],
            DirectionPolicy::Reverse => &[true],
        };
        let plds = directions
            .iter()
            .map(|&reversed| single(reversed).and_then(|pld| compose(&pld, steps)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { plds })
    }
}

/// Single-step PLD of a branched pair: discretize each branch, then mix.
pub fn branched_pld(pair: &BranchedDominatingPair, grid_step: f64, estimate: Estimate) -> Result<DiscretePld> {
    let plds = pair
        .branches()
        .iter()
        .map(|b| discretize(&b.pair, grid_step, estimate))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = pair.branches().iter().map(|b| b.weight).collect();
    mix(&plds, &weights)
}

/// Privacy profile of `steps` runs of the truncated Poisson sampled
/// Gaussian sum.
pub fn truncated_profile(
    params: &TruncatedPoissonParams,
    adjacency: Adjacency,
    steps: u64,
    options: &AccountingOptions,
) -> Result<PrivacyProfile> {
    let pair = build_pair(params, adjacency)?;
    PrivacyProfile::build(options, steps, |reversed| {
        let pair = if reversed { pair.reverse() } else { pair.clone() };
        branched_pld(&pair, options.grid_step, options.estimate)
    })
}

/// Privacy profile of `steps` runs of the untruncated Poisson subsampled
/// Gaussian mechanism with sampling probability `rate`.
pub fn poisson_profile(
    rate: f64,
    sigma: f64,
    adjacency: Adjacency,
    steps: u64,
    options: &AccountingOptions,
) -> Result<PrivacyProfile> {
    let pair = poisson_pair(rate, sigma, adjacency)?;
    PrivacyProfile::build(options, steps, |reversed| {
        let pair = if reversed { pair.swapped() } else { pair.clone() };
        discretize(&pair, options.grid_step, options.estimate)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccountingResult {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub steps: u64,
    pub adjacency: Adjacency,
    pub direction_policy: DirectionPolicy,
}

fn answer(profile: &PrivacyProfile, query: Query) -> Result<(f64, f64)> {
    match query {
        Query::Delta { epsilon } => {
            if epsilon.is_nan() {
                return Err(Error::InvalidParameter {
                    name: "epsilon",
                    reason: "epsilon must be a number",
                });
            }
            Ok((epsilon, profile.delta(epsilon)))
        }
        Query::Epsilon { delta } => Ok((profile.epsilon(delta)?, delta)),
    }
}

/// End-to-end accounting: branched pair, per-branch discretization, mixture,
/// composition, then the query (worst case over the selected directions).
pub fn account(
    params: &TruncatedPoissonParams,
    adjacency: Adjacency,
    steps: u64,
    query: Query,
    options: &AccountingOptions,
) -> Result<AccountingResult> {
    let profile = truncated_profile(params, adjacency, steps, options)?;
    let (epsilon, delta) = answer(&profile, query)?;
    Ok(AccountingResult {
        epsilon,
        delta,
        sigma: params.sigma(),
        steps,
        adjacency,
        direction_policy: options.direction,
    })
}

/// The same pipeline for plain Poisson subsampling without truncation.
pub fn account_poisson(
    rate: f64,
    sigma: f64,
    adjacency: Adjacency,
    steps: u64,
    query: Query,
    options: &AccountingOptions,
) -> Result<AccountingResult> {
    let profile = poisson_profile(rate, sigma, adjacency, steps, options)?;
    let (epsilon, delta) = answer(&profile, query)?;
    Ok(AccountingResult {
        epsilon,
        delta,
        sigma,
        steps,
        adjacency,
        direction_policy: options.direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal_cdf;

    fn gaussian_pair(mu: f64, sigma: f64) -> MixturePair {
        MixturePair::new(
            GaussianMixture::point(sigma, mu).unwrap(),
            GaussianMixture::point(sigma, 0.0).unwrap(),
        )
        .unwrap()
    }

    /// Hockey-stick divergence of N(mu, 1) vs N(0, 1).
    fn gaussian_delta(mu: f64, eps: f64) -> f64 {
        normal_cdf(mu / 2.0 - eps / mu) - exp(eps) * normal_cdf(-mu / 2.0 - eps / mu)
    }

    #[test]
    fn identical_pair_is_point_mass() {
        let pair = gaussian_pair(0.0, 1.0);
        let pld = discretize(&pair, 1e-4, Estimate::Pessimistic).unwrap();
        assert_eq!(pld.masses(), &[1.0]);
        assert_eq!(pld.lowest_index(), 0);
        assert_eq!(pld.infinity_mass(), 0.0);
        assert_eq!(pld.delta_at(0.0), 0.0);
        assert_eq!(pld.epsilon_at(1e-6).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_discretization_matches_closed_form() {
        let pair = gaussian_pair(1.0, 1.0);
        let pess = discretize(&pair, 1e-4, Estimate::Pessimistic).unwrap();
        let opt = discretize(&pair, 1e-4, Estimate::Optimistic).unwrap();
        assert!((pess.total_mass() - 1.0).abs() < 1e-9);
        assert!((opt.total_mass() - 1.0).abs() < 1e-9);
        for &eps in &[0.0, 0.3, 1.0, 2.5] {
            let exact = gaussian_delta(1.0, eps);
            let hi = pess.delta_at(eps);
            let lo = opt.delta_at(eps);
            assert!(
                lo <= exact + 1e-12 && exact <= hi + 1e-12,
                "eps={eps}: {lo} {exact} {hi}"
            );
            assert!(hi - lo < 1e-4);
        }
        assert!((pess.delta_at(0.0) - 0.382_924_922_548_026).abs() < 1e-4);
    }

    #[test]
    fn delta_query_limits() {
        let pld = DiscretePld::from_masses(0.5, -2, vec![0.2, 0.3, 0.4], 0.1, Estimate::Pessimistic).unwrap();
        assert_eq!(pld.delta_at(1e6), 0.1);
        assert!(pld.delta_at(-50.0) <= 1.0);
        // losses -1, -0.5, 0; nothing above eps = 0 except infinity
        assert_eq!(pld.delta_at(0.0), 0.1);
    }

    #[test]
    fn epsilon_inverts_delta() {
        let pair = gaussian_pair(1.0, 1.0);
        let pld = discretize(&pair, 1e-4, Estimate::Pessimistic).unwrap();
        for &eps in &[0.05, 0.5, 1.7, 3.0] {
            let d = pld.delta_at(eps);
            let back = pld.epsilon_at(d).unwrap();
            assert!((back - eps).abs() < 1e-9, "{eps} -> {d} -> {back}");
        }
        let e = pld.epsilon_at(0.382_924_922_548_026).unwrap();
        assert!(e.abs() < 2e-4, "{e}");
    }

    #[test]
    fn epsilon_unattainable_below_infinity_mass() {
        let pld = DiscretePld::from_masses(0.1, 0, vec![0.999], 1e-3, Estimate::Pessimistic).unwrap();
        assert_eq!(pld.epsilon_at(1e-6).unwrap(), f64::INFINITY);
        assert!(pld.epsilon_at(0.0).is_err());
    }

    #[test]
    fn mix_examples() {
        let x = discretize(&gaussian_pair(1.0, 1.0), 1e-3, Estimate::Pessimistic).unwrap();
        assert_eq!(mix(core::slice::from_ref(&x), &[1.0]).unwrap(), x);
        let xx = mix(&[x.clone(), x.clone()], &[0.3, 0.7]).unwrap();
        assert_eq!(xx.lowest_index(), x.lowest_index());
        for (a, b) in xx.masses().iter().zip(x.masses()) {
            assert!((a - b).abs() <= 1e-16);
        }
        let y = discretize(&gaussian_pair(2.0, 1.0), 1e-2, Estimate::Pessimistic).unwrap();
        assert_eq!(mix(&[x.clone(), y], &[0.5, 0.5]), Err(Error::GridMismatch));
        assert!(mix(core::slice::from_ref(&x), &[0.9]).is_err());
    }

    #[test]
    fn compose_examples() {
        let x = discretize(&gaussian_pair(1.0, 1.0), 1e-3, Estimate::Pessimistic).unwrap();
        assert_eq!(compose(&x, 1).unwrap(), x);
        assert!(compose(&x, 0).is_err());
        let id = DiscretePld::identity(1e-4, Estimate::Pessimistic);
        assert_eq!(compose(&id, 1000).unwrap(), id);
    }

    #[test]
    fn gaussian_composition_identity() {
        let one = discretize(&gaussian_pair(1.0, 1.0), 1e-4, Estimate::Pessimistic).unwrap();
        let four = compose(&one, 4).unwrap();
        let half = discretize(&gaussian_pair(1.0, 0.5), 1e-4, Estimate::Pessimistic).unwrap();
        for i in 0..=12 {
            let eps = 0.25 * i as f64;
            let a = four.delta_at(eps);
            let b = half.delta_at(eps);
            assert!((a - b).abs() < 1e-4, "eps={eps}: {a} vs {b}");
            assert!((b - gaussian_delta(2.0, eps)).abs() < 1e-4);
        }
    }

    #[test]
    fn infinity_mass_composes_multiplicatively() {
        let pld = DiscretePld::from_masses(0.1, 0, vec![0.5, 0.49], 0.01, Estimate::Pessimistic).unwrap();
        let c = compose(&pld, 3).unwrap();
        assert!((c.infinity_mass() - (1.0 - 0.99f64.powi(3))).abs() < 1e-15);
        assert!((c.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reversed_pair_is_decreasing_piece() {
        let pair = gaussian_pair(1.0, 1.0).swapped();
        let pld = discretize(&pair, 1e-4, Estimate::Pessimistic).unwrap();
        // N(0,1) vs N(1,1) has the same hockey-stick curve by symmetry
        for &eps in &[0.0, 0.5, 2.0] {
            assert!((pld.delta_at(eps) - gaussian_delta(1.0, eps)).abs() < 1e-4);
        }
    }

    #[test]
    fn policy_strings() {
        for p in [
            DirectionPolicy::MaxOfBoth,
            DirectionPolicy::Forward,
            DirectionPolicy::Reverse,
        ] {
            assert_eq!(p.as_str().parse::<DirectionPolicy>().unwrap(), p);
        }
        assert!("both".parse::<DirectionPolicy>().is_err());
        for e in [Estimate::Pessimistic, Estimate::Optimistic] {
            assert_eq!(e.as_str().parse::<Estimate>().unwrap(), e);
        }
        assert!("exact".parse::<Estimate>().is_err());
    }

    #[test]
    fn grid_step_validation() {
        let pair = gaussian_pair(1.0, 1.0);
        assert!(discretize(&pair, 0.0, Estimate::Pessimistic).is_err());
        assert!(discretize(&pair, -1.0, Estimate::Pessimistic).is_err());
        assert!(discretize(&pair, 2.0, Estimate::Pessimistic).is_err());
    }
}
