//! Ground truth for desk-scale checks.
//!
//! [`hockey_stick_mixture`] computes the exact hockey-stick divergence of two
//! Gaussian mixtures from the sign changes of `P - e^eps Q`, without any
//! loss-grid discretization. [`exact_mechanism_law`] gives the exact output
//! law of the truncated sampled sum on scalar datasets, derived directly from
//! the sampling procedure: the other `n - 1` examples contribute
//! `s ~ Binom(n - 1, p)` draws, and when the batch overflows a uniformly
//! random size-`B` subset keeps any particular sampled element with
//! probability `B / (s + 1)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::binom::{binom_pmf, TruncatedPoissonParams};
use crate::error::{Error, Result};
use crate::math::{exp, ln};
use crate::pairs::{Adjacency, GaussianMixture};

/// Largest dataset size for which exact laws are computed.
pub const MAX_EXACT_N: u64 = 10_000;

const BRACKET_SIGMAS: f64 = 12.0;

/// `ln` of the mixture density, up to the shared Gaussian normalizer.
fn ln_density(m: &GaussianMixture, t: f64) -> f64 {
    let inv = 0.5 / (m.sigma() * m.sigma());
    let exps: Vec<f64> = m
        .components()
        .iter()
        .map(|c| ln(c.weight) - (t - c.mean) * (t - c.mean) * inv)
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    top + ln(exps.iter().map(|e| exp(e - top)).sum::<f64>())
}

/// `delta = integral of max(P(t) - e^eps Q(t), 0) dt` for two mixtures with
/// a shared standard deviation.
///
/// The sign of `ln P - ln Q - eps` is sampled on
/// `[min mean - 12 sigma, max mean + 12 sigma]` at `10 (k + m) + 64` points,
/// sign changes are refined by bisection, and each positive interval
/// contributes `P(I) - e^eps Q(I)` from tail-accurate Gaussian CDFs.
pub fn hockey_stick_mixture(p: &GaussianMixture, q: &GaussianMixture, epsilon: f64) -> Result<f64> {
    if p.sigma() != q.sigma() {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: "both mixtures must share sigma",
        });
    }
    if epsilon.is_nan() {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: "epsilon must be a number",
        });
    }
    let sigma = p.sigma();
    let lo = p.min_mean().min(q.min_mean()) - BRACKET_SIGMAS * sigma;
    let hi = p.max_mean().max(q.max_mean()) + BRACKET_SIGMAS * sigma;
    let points = 10 * (p.components().len() + q.components().len()) + 64;
    let positive = |t: f64| ln_density(p, t) - ln_density(q, t) - epsilon > 0.0;

    let step = (hi - lo) / points as f64;
    let mut cuts: Vec<f64> = Vec::new();
    let mut prev_t = lo;
    let mut prev = positive(lo);
    let first = prev;
    for i in 1..=points {
        let t = lo + step * i as f64;
        let s = positive(t);
        if s != prev {
            let (mut a, mut b) = (prev_t, t);
            while b - a > 1e-13 * (1.0 + a.abs().max(b.abs())) {
                let mid = 0.5 * (a + b);
                if positive(mid) == prev {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            cuts.push(0.5 * (a + b));
        }
        prev_t = t;
        prev = s;
    }

    let scale = exp(epsilon);
    let mut delta = 0.0;
    let mut inside = first;
    let mut start = f64::NEG_INFINITY;
    for end in cuts.iter().copied().chain(core::iter::once(f64::INFINITY)) {
        if inside {
            let pm = p.interval_mass(start, end);
            let qm = q.interval_mass(start, end);
            delta += if qm > 0.0 { pm - scale * qm } else { pm };
        }
        inside = !inside;
        start = end;
    }
    Ok(delta.clamp(0.0, 1.0))
}

/// How the scalar dataset values are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScalarLayout {
    /// Every example is `1`; for replace-one the distinguished example is
    /// `+1` in `D` and `-1` in `D'` and all others are `0`.
    Aligned,
    /// The distinguished example is `+1` in `D` (and `0` or `-1` in `D'`)
    /// while every other example is `-1`, so displacing one of them under
    /// truncation moves the sum by 2.
    Opposed,
}

/// A pair of adjacent scalar datasets together with mechanism parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorstCaseInstance {
    pub params: TruncatedPoissonParams,
    pub adjacency: Adjacency,
    pub layout: ScalarLayout,
}

impl WorstCaseInstance {
    pub fn new(params: TruncatedPoissonParams, adjacency: Adjacency) -> Self {
        Self {
            params,
            adjacency,
            layout: ScalarLayout::Aligned,
        }
    }

    pub fn with_layout(mut self, layout: ScalarLayout) -> Self {
        self.layout = layout;
        self
    }

    /// `(value of the distinguished example in D, its value in D' or None
    /// when removed, value of every other example)`.
    fn values(&self) -> (i64, Option<i64>, i64) {
        let others = match self.layout {
            ScalarLayout::Aligned => 1,
            ScalarLayout::Opposed => -1,
        };
        match (self.adjacency, self.layout) {
            (Adjacency::AddRemove, _) => (1, None, others),
            (Adjacency::ZeroOut, _) => (1, Some(0), others),
            (Adjacency::ReplaceOne, ScalarLayout::Aligned) => (1, Some(-1), 0),
            (Adjacency::ReplaceOne, ScalarLayout::Opposed) => (1, Some(-1), others),
        }
    }
}

fn push(law: &mut BTreeMap<i64, f64>, mean: i64, w: f64) {
    if w > 0.0 {
        *law.entry(mean).or_insert(0.0) += w;
    }
}

/// Output law of the sum when the distinguished example with value `v` is
/// in the dataset and the other `n - 1` examples all equal `c`.
fn law_with(params: &TruncatedPoissonParams, v: i64, c: i64) -> Result<BTreeMap<i64, f64>> {
    let (n, p, b) = (params.n(), params.p(), params.max_batch());
    let bi = b as i64;
    let mut law = BTreeMap::new();
    for s in 0..n {
        let ps = binom_pmf(n - 1, s, p)?;
        if ps == 0.0 {
            continue;
        }
        let si = s as i64;
        if s < b {
            push(&mut law, c * si, (1.0 - p) * ps);
            push(&mut law, c * si + v, p * ps);
        } else {
            push(&mut law, c * bi, (1.0 - p) * ps);
            let kept = b as f64 / (s + 1) as f64;
            push(&mut law, c * (bi - 1) + v, p * ps * kept);
            push(&mut law, c * bi, p * ps * (1.0 - kept));
        }
    }
    Ok(law)
}

/// Output law when the distinguished example is removed (`n - 1` examples,
/// all equal to `c`).
fn law_without(params: &TruncatedPoissonParams, c: i64) -> Result<BTreeMap<i64, f64>> {
    let (n, p, b) = (params.n(), params.p(), params.max_batch());
    let mut law = BTreeMap::new();
    for s in 0..n {
        let ps = binom_pmf(n - 1, s, p)?;
        push(&mut law, c * s.min(b) as i64, ps);
    }
    Ok(law)
}

fn to_mixture(sigma: f64, law: BTreeMap<i64, f64>) -> Result<GaussianMixture> {
    let total: f64 = law.values().sum();
    GaussianMixture::new(sigma, law.into_iter().map(|(m, w)| (w / total, m as f64)))
}

/// Exact one-dimensional output laws `(M(D), M(D'))` for the instance.
pub fn exact_mechanism_law(instance: &WorstCaseInstance) -> Result<(GaussianMixture, GaussianMixture)> {
    let params = &instance.params;
    if params.n() > MAX_EXACT_N {
        return Err(Error::TooLarge {
            what: "dataset size",
            limit: MAX_EXACT_N,
        });
    }
    let (v, v_prime, c) = instance.values();
    let law_d = law_with(params, v, c)?;
    let law_d_prime = match v_prime {
        Some(v2) => law_with(params, v2, c)?,
        None => law_without(params, c)?,
    };
    Ok((
        to_mixture(params.sigma(), law_d)?,
        to_mixture(params.sigma(), law_d_prime)?,
    ))
}

/// Exact `delta(eps)` of the mechanism on the instance, worst case over both
/// orderings of the adjacent pair.
pub fn exact_mechanism_delta(instance: &WorstCaseInstance, epsilon: f64) -> Result<f64> {
    let (d, d_prime) = exact_mechanism_law(instance)?;
    let forward = hockey_stick_mixture(&d, &d_prime, epsilon)?;
    let backward = hockey_stick_mixture(&d_prime, &d, epsilon)?;
    Ok(forward.max(backward))
}
