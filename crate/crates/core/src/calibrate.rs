//! Noise calibration and the comparison against a generic truncation bound.
//!
//! The generic bound treats truncation as a failure event: with
//! `eta_1 = Pr[Binom(n, p) > B]` per step and `eta` the probability that any
//! of `T` steps truncates, a mechanism that is `(eps, delta)`-DP without
//! truncation is `(eps, delta + e^eps * eta)`-DP with it.
//!
//! Calibration searches over dyadic rationals in a fixed order (start at 10,
//! double or halve to bracket, then bisect), so two monotone curves with
//! `delta_a <= delta_b` pointwise always yield `sigma_a <= sigma_b`.

use crate::binom::{binom_sf_geq, TruncatedPoissonParams};
use crate::error::{Error, Result};
use crate::math::{exp, expm1, ln_1p};
use crate::pairs::Adjacency;
use crate::pld::{poisson_profile, truncated_profile, AccountingOptions, PrivacyProfile};

/// Smallest noise multiplier calibration will report. When the target is
/// already met here the floor itself is returned.
pub const SIGMA_FLOOR: f64 = 0.1;

const SIGMA_START: f64 = 10.0;
const MAX_DOUBLINGS: u32 = 60;
const RELATIVE_WIDTH: f64 = 1e-4;

/// How per-step truncation probabilities combine over `T` steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EtaRule {
    /// `eta = min(1, T * eta_1)`.
    #[default]
    UnionBound,
    /// `eta = 1 - (1 - eta_1)^T`.
    Independent,
}

impl EtaRule {
    pub fn combine(self, eta_1: f64, steps: u64) -> f64 {
        match self {
            EtaRule::UnionBound => (steps as f64 * eta_1).min(1.0),
            EtaRule::Independent => -expm1(steps as f64 * ln_1p(-eta_1)),
        }
    }
}

/// `(eps, delta)` pair a calibration aims for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub epsilon: f64,
    pub delta: f64,
}

impl Target {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: "target epsilon must be finite and nonnegative",
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "target delta must lie in (0, 1)",
            });
        }
        Ok(Self { epsilon, delta })
    }
}

/// Smallest `sigma` (to relative width 1e-4, rounded up) in
/// `[SIGMA_FLOOR, 10 * 2^60]` with `delta_of(sigma) <= target`, for a
/// nonincreasing `delta_of`.
pub fn calibrate_by<F>(target_delta: f64, mut delta_of: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut meets = |sigma: f64| delta_of(sigma).map(|d| d <= target_delta);
    let (mut lo, mut hi);
    if meets(SIGMA_START)? {
        hi = SIGMA_START;
        lo = hi / 2.0;
        while meets(lo)? {
            hi = lo;
            if hi <= SIGMA_FLOOR {
                return Ok(SIGMA_FLOOR);
            }
            lo = (hi / 2.0).max(SIGMA_FLOOR);
        }
    } else {
        lo = SIGMA_START;
        hi = 2.0 * lo;
        let mut doublings = 1;
        while !meets(hi)? {
            if doublings == MAX_DOUBLINGS {
                return Err(Error::Uncalibratable);
            }
            lo = hi;
            hi *= 2.0;
            doublings += 1;
        }
    }
    while hi - lo > RELATIVE_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn check_steps(steps: u64) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "number of steps must be at least 1",
        });
    }
    Ok(())
}

/// Smallest noise multiplier making `steps` runs of the truncated mechanism
/// `(eps, delta)`-DP under the tight accountant.
pub fn calibrate_sigma(
    n: u64,
    p: f64,
    max_batch: u64,
    adjacency: Adjacency,
    steps: u64,
    target: Target,
    options: &AccountingOptions,
) -> Result<f64> {
    check_steps(steps)?;
    let base = TruncatedPoissonParams::new(n, p, max_batch, SIGMA_START)?;
    calibrate_by(target.delta, |sigma| {
        let params = base.with_sigma(sigma)?;
        Ok(truncated_profile(&params, adjacency, steps, options)?.delta(target.epsilon))
    })
}

/// The generic bound for fixed parameters: the untruncated profile plus the
/// truncation failure probability.
#[derive(Clone, Debug)]
pub struct NaiveProfile {
    poisson: PrivacyProfile,
    eta: f64,
}

impl NaiveProfile {
    pub fn new(
        params: &TruncatedPoissonParams,
        adjacency: Adjacency,
        steps: u64,
        rule: EtaRule,
        options: &AccountingOptions,
    ) -> Result<Self> {
        check_steps(steps)?;
        Ok(Self {
            poisson: poisson_profile(params.p(), params.sigma(), adjacency, steps, options)?,
            eta: rule.combine(truncation_probability(params), steps),
        })
    }

    /// Probability that at least one step truncates, as combined by the rule.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn delta(&self, epsilon: f64) -> f64 {
        let charge = if self.eta > 0.0 { exp(epsilon) * self.eta } else { 0.0 };
        (self.poisson.delta(epsilon) + charge).min(1.0)
    }
}

/// `delta` of the generic bound at noise multiplier `sigma`.
pub fn naive_bound(
    params: &TruncatedPoissonParams,
    adjacency: Adjacency,
    steps: u64,
    epsilon: f64,
    rule: EtaRule,
    options: &AccountingOptions,
) -> Result<f64> {
    Ok(NaiveProfile::new(params, adjacency, steps, rule, options)?.delta(epsilon))
}

/// `Pr[Binom(n, p) > B]`, the chance one step truncates.
pub fn truncation_probability(params: &TruncatedPoissonParams) -> f64 {
    binom_sf_geq(params.n(), params.max_batch() + 1, params.p())
}

/// Side-by-side calibration of the tight accountant and the generic bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonReport {
    pub n: u64,
    pub p: f64,
    pub max_batch: u64,
    pub adjacency: Adjacency,
    pub steps: u64,
    pub target_epsilon: f64,
    pub target_delta: f64,
    pub sigma_tight: f64,
    /// `+inf` when `e^eps * eta` alone exceeds the target.
    pub sigma_naive: f64,
    pub truncation_prob_per_step: f64,
    pub expected_batch: f64,
    pub utilization: f64,
}

/// Calibrates both accountants for the same target.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    n: u64,
    p: f64,
    max_batch: u64,
    adjacency: Adjacency,
    steps: u64,
    target: Target,
    rule: EtaRule,
    options: &AccountingOptions,
) -> Result<ComparisonReport> {
    check_steps(steps)?;
    let base = TruncatedPoissonParams::new(n, p, max_batch, SIGMA_START)?;
    let sigma_tight = calibrate_sigma(n, p, max_batch, adjacency, steps, target, options)?;
    let eta_1 = truncation_probability(&base);
    let floor = exp(target.epsilon) * rule.combine(eta_1, steps);
    let sigma_naive = if floor >= target.delta {
        f64::INFINITY
    } else {
        calibrate_by(target.delta, |sigma| {
            naive_bound(
                &base.with_sigma(sigma)?,
                adjacency,
                steps,
                target.epsilon,
                rule,
                options,
            )
        })?
    };
    if sigma_tight > sigma_naive {
        return Err(Error::ComparisonInverted {
            sigma_tight,
            sigma_naive,
        });
    }
    let expected_batch = n as f64 * p;
    Ok(ComparisonReport {
        n,
        p,
        max_batch,
        adjacency,
        steps,
        target_epsilon: target.epsilon,
        target_delta: target.delta,
        sigma_tight,
        sigma_naive,
        truncation_prob_per_step: eta_1,
        expected_batch,
        utilization: expected_batch / max_batch as f64,
    })
}
