//! One-dimensional Gaussian mixtures and the branched dominating pairs of the
//! truncated Poisson sampled Gaussian sum.
//!
//! A branched pair releases which branch `r` occurred: `r = 1` when the other
//! `n - 1` examples alone stay below the batch cap, `r = 2` otherwise. Within
//! each branch the pair is a mixture of unit-spaced Gaussians with a common
//! standard deviation.
//!
//! For the cyclic Poisson variant of banded matrix factorization the same
//! construction applies with `n` set to the size of one cyclic subset.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::binom::{binom_cdf_lt, binom_sf_geq, truncation_q, TruncatedPoissonParams, BRANCH_FLOOR};
use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, normal_interval};

/// Dataset adjacency relation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Adjacency {
    /// `D'` is `D` with one of its `n` elements deleted.
    AddRemove,
    /// `D'` is `D` with one element replaced by the zero vector.
    ZeroOut,
    /// `D'` is `D` with one element replaced by an arbitrary unit-ball vector.
    ReplaceOne,
}

impl Adjacency {
    pub const ALL: [Adjacency; 3] = [Adjacency::AddRemove, Adjacency::ZeroOut, Adjacency::ReplaceOne];

    pub fn as_str(&self) -> &'static str {
        match self {
            Adjacency::AddRemove => "add-remove",
            Adjacency::ZeroOut => "zero-out",
            Adjacency::ReplaceOne => "replace-one",
        }
    }
}

impl fmt::Display for Adjacency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Adjacency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add-remove" => Ok(Adjacency::AddRemove),
            "zero-out" => Ok(Adjacency::ZeroOut),
            "replace-one" => Ok(Adjacency::ReplaceOne),
            _ => Err(Error::InvalidParameter {
                name: "adjacency",
                reason: "expected one of add-remove, zero-out, replace-one",
            }),
        }
    }
}

/// One weighted component `weight * N(mean, sigma^2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
}

/// Finite mixture of Gaussians sharing one standard deviation.
///
/// Components are kept sorted by mean with duplicates merged and zero
/// weights dropped, so two mixtures describing the same law compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    sigma: f64,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Builds a mixture from `(weight, mean)` pairs.
    pub fn new<I>(sigma: f64, components: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "mixture standard deviation must be positive and finite",
            });
        }
        let mut parts: Vec<Component> = Vec::new();
        let mut total = 0.0;
        for (weight, mean) in components {
            if !(0.0..=1.0 + 1e-12).contains(&weight) {
                return Err(Error::InvalidParameter {
                    name: "weight",
                    reason: "mixture weights must be probabilities",
                });
            }
            if !mean.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "mean",
                    reason: "mixture means must be finite",
                });
            }
            total += weight;
            if weight > 0.0 {
                parts.push(Component { weight, mean });
            }
        }
        if parts.is_empty() || abs(total - 1.0) > 1e-12 {
            return Err(Error::InvalidParameter {
                name: "weight",
                reason: "mixture weights must sum to one",
            });
        }
        parts.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        let mut merged: Vec<Component> = Vec::with_capacity(parts.len());
        for c in parts {
            match merged.last_mut() {
                Some(last) if last.mean == c.mean => last.weight += c.weight,
                _ => merged.push(c),
            }
        }
        Ok(Self {
            sigma,
            components: merged,
        })
    }

    /// The single Gaussian `N(mean, sigma^2)`.
    pub fn point(sigma: f64, mean: f64) -> Result<Self> {
        Self::new(sigma, [(1.0, mean)])
    }

    /// `(1 - w) N(0, sigma^2) + w N(mean, sigma^2)`.
    pub fn two_point(sigma: f64, w: f64, mean: f64) -> Result<Self> {
        Self::new(sigma, [(1.0 - w, 0.0), (w, mean)])
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn min_mean(&self) -> f64 {
        self.components[0].mean
    }

    pub fn max_mean(&self) -> f64 {
        self.components[self.components.len() - 1].mean
    }

    /// The mixture reflected through zero.
    pub fn negated(&self) -> Self {
        let mut components: Vec<Component> = self
            .components
            .iter()
            .map(|c| Component {
                weight: c.weight,
                mean: -c.mean,
            })
            .collect();
        components.reverse();
        Self {
            sigma: self.sigma,
            components,
        }
    }

    /// Log density up to the shared Gaussian normalizer, together with the
    /// posterior mean of the component index's mean at `t`.
    #[inline]
    pub(crate) fn ln_kernel_and_mean(&self, t: f64) -> (f64, f64) {
        let inv = 0.5 / (self.sigma * self.sigma);
        let mut top = f64::NEG_INFINITY;
        for c in &self.components {
            let d = t - c.mean;
            let e = ln(c.weight) - d * d * inv;
            if e > top {
                top = e;
            }
        }
        let mut s = 0.0;
        let mut sm = 0.0;
        for c in &self.components {
            let d = t - c.mean;
            let w = exp(ln(c.weight) - d * d * inv - top);
            s += w;
            sm += w * c.mean;
        }
        (top + ln(s), sm / s)
    }

    /// Mass of `(a, b]`.
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_interval((a - c.mean) / self.sigma, (b - c.mean) / self.sigma))
            .sum()
    }
}

/// A pair `(P, Q)` of mixtures with a shared standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePair {
    p: GaussianMixture,
    q: GaussianMixture,
}

impl MixturePair {
    pub fn new(p: GaussianMixture, q: GaussianMixture) -> Result<Self> {
        if p.sigma != q.sigma {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "both mixtures of a pair must share sigma",
            });
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> &GaussianMixture {
        &self.p
    }

    pub fn q(&self) -> &GaussianMixture {
        &self.q
    }

    pub fn sigma(&self) -> f64 {
        self.p.sigma
    }

    /// `(Q, P)`.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }

    /// True when both sides are the same law.
    pub fn is_trivial(&self) -> bool {
        self.p == self.q
    }

    /// Privacy loss `ln(P(t) / Q(t))`.
    pub fn privacy_loss(&self, t: f64) -> f64 {
        self.loss_and_slope(t).0
    }

    /// Privacy loss and its derivative in `t`.
    #[inline]
    pub(crate) fn loss_and_slope(&self, t: f64) -> (f64, f64) {
        let (lp, mp) = self.p.ln_kernel_and_mean(t);
        let (lq, mq) = self.q.ln_kernel_and_mean(t);
        let s2 = self.p.sigma * self.p.sigma;
        (lp - lq, (mp - mq) / s2)
    }
}

/// Which branch of the released indicator `r` a pair belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchKind {
    /// `r = 1`: the other examples fit in the batch.
    Untruncated,
    /// `r = 2`: the batch may have been truncated.
    Truncated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub weight: f64,
    pub pair: MixturePair,
}

/// Dominating pair for one application of the mechanism, as a public mixture
/// over the branches `r = 1, 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchedDominatingPair {
    adjacency: Adjacency,
    params: TruncatedPoissonParams,
    branches: Vec<Branch>,
    reversed: bool,
}

impl BranchedDominatingPair {
    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }

    pub fn params(&self) -> &TruncatedPoissonParams {
        &self.params
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Whether `P` and `Q` have been swapped relative to [`build_pair`].
    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// The pair dominating in the other direction: `P` and `Q` swapped in
    /// every branch, weights untouched.
    pub fn reverse(&self) -> Self {
        Self {
            adjacency: self.adjacency,
            params: self.params,
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    kind: b.kind,
                    weight: b.weight,
                    pair: b.pair.swapped(),
                })
                .collect(),
            reversed: !self.reversed,
        }
    }
}

/// `(Pr[Binom(n-1,p) < B], Pr[Binom(n-1,p) >= B])`.
pub fn branch_weights(params: &TruncatedPoissonParams) -> (f64, f64) {
    let n = params.n() - 1;
    let b = params.max_batch();
    (binom_cdf_lt(n, b, params.p()), binom_sf_geq(n, b, params.p()))
}

/// Dominating pair of the plain Poisson subsampled Gaussian mechanism with
/// sampling probability `rate` (the `r = 1` row).
pub fn poisson_pair(rate: f64, sigma: f64, adjacency: Adjacency) -> Result<MixturePair> {
    let p = GaussianMixture::two_point(sigma, rate, 1.0)?;
    let q = match adjacency {
        Adjacency::AddRemove | Adjacency::ZeroOut => GaussianMixture::point(sigma, 0.0)?,
        Adjacency::ReplaceOne => GaussianMixture::two_point(sigma, rate, -1.0)?,
    };
    MixturePair::new(p, q)
}

/// Pair for the truncated branch (`r = 2`) with conditional inclusion
/// probability `q`: sensitivity doubles because the distinguished example
/// displaces another one.
pub fn truncated_pair(q: f64, sigma: f64, adjacency: Adjacency) -> Result<MixturePair> {
    let p = GaussianMixture::two_point(sigma, q, 2.0)?;
    let other = match adjacency {
        Adjacency::AddRemove => GaussianMixture::point(sigma, 0.0)?,
        Adjacency::ZeroOut => GaussianMixture::two_point(sigma, q, -1.0)?,
        Adjacency::ReplaceOne => GaussianMixture::two_point(sigma, q, -2.0)?,
    };
    MixturePair::new(p, other)
}

/// Builds the branched dominating pair for `params` under `adjacency`.
/// Branches whose weight falls below the underflow floor are omitted.
pub fn build_pair(params: &TruncatedPoissonParams, adjacency: Adjacency) -> Result<BranchedDominatingPair> {
    let (w1, w2) = branch_weights(params);
    let sigma = params.sigma();
    let mut branches = Vec::with_capacity(2);
    if w1 >= BRANCH_FLOOR {
        branches.push(Branch {
            kind: BranchKind::Untruncated,
            weight: w1,
            pair: poisson_pair(params.p(), sigma, adjacency)?,
        });
    }
    if w2 >= BRANCH_FLOOR {
        let q = truncation_q(params)?;
        branches.push(Branch {
            kind: BranchKind::Truncated,
            weight: w2,
            pair: truncated_pair(q, sigma, adjacency)?,
        });
    }
    Ok(BranchedDominatingPair {
        adjacency,
        params: *params,
        branches,
        reversed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u64, p: f64, b: u64, sigma: f64) -> TruncatedPoissonParams {
        TruncatedPoissonParams::new(n, p, b, sigma).unwrap()
    }

    fn mix(sigma: f64, parts: &[(f64, f64)]) -> GaussianMixture {
        GaussianMixture::new(sigma, parts.iter().copied()).unwrap()
    }

    #[test]
    fn weights_examples() {
        let (w1, w2) = branch_weights(&params(3, 0.5, 1, 1.0));
        assert!((w1 - 0.25).abs() < 1e-15 && (w2 - 0.75).abs() < 1e-15);
        assert_eq!(branch_weights(&params(10, 0.5, 10, 1.0)), (1.0, 0.0));
        assert_eq!(branch_weights(&params(1, 0.7, 1, 1.0)), (1.0, 0.0));
    }

    #[test]
    fn add_remove_two_branches() {
        let pair = build_pair(&params(3, 0.5, 1, 1.0), Adjacency::AddRemove).unwrap();
        let br = pair.branches();
        assert_eq!(br.len(), 2);
        assert_eq!(br[0].kind, BranchKind::Untruncated);
        assert!((br[0].weight - 0.25).abs() < 1e-15);
        assert_eq!(br[0].pair.p(), &mix(1.0, &[(0.5, 0.0), (0.5, 1.0)]));
        assert_eq!(br[0].pair.q(), &mix(1.0, &[(1.0, 0.0)]));
        assert!((br[1].weight - 0.75).abs() < 1e-15);
        let c = br[1].pair.p().components();
        assert_eq!(c.len(), 2);
        assert!((c[0].weight - 7.0 / 9.0).abs() < 1e-15 && c[0].mean == 0.0);
        assert!((c[1].weight - 2.0 / 9.0).abs() < 1e-15 && c[1].mean == 2.0);
        assert_eq!(br[1].pair.q(), &mix(1.0, &[(1.0, 0.0)]));
    }

    #[test]
    fn never_truncating_gives_poisson_pair() {
        for adj in Adjacency::ALL {
            let pair = build_pair(&params(10, 0.5, 10, 2.0), adj).unwrap();
            assert_eq!(pair.branches().len(), 1);
            assert_eq!(pair.branches()[0].weight, 1.0);
            assert_eq!(pair.branches()[0].pair, poisson_pair(0.5, 2.0, adj).unwrap());
        }
    }

    #[test]
    fn always_truncating_gives_fixed_batch_pair() {
        let pair = build_pair(&params(4, 1.0, 2, 1.0), Adjacency::AddRemove).unwrap();
        assert_eq!(pair.branches().len(), 1);
        let b = &pair.branches()[0];
        assert_eq!(b.kind, BranchKind::Truncated);
        assert_eq!(b.weight, 1.0);
        assert_eq!(b.pair.p(), &mix(1.0, &[(0.5, 0.0), (0.5, 2.0)]));
        assert_eq!(b.pair.q(), &mix(1.0, &[(1.0, 0.0)]));
    }

    #[test]
    fn table_of_means() {
        let pr = params(20, 0.3, 5, 1.0);
        let expect: [(Adjacency, [&[f64]; 4]); 3] = [
            (Adjacency::AddRemove, [&[0.0, 1.0], &[0.0], &[0.0, 2.0], &[0.0]]),
            (Adjacency::ZeroOut, [&[0.0, 1.0], &[0.0], &[0.0, 2.0], &[-1.0, 0.0]]),
            (
                Adjacency::ReplaceOne,
                [&[0.0, 1.0], &[-1.0, 0.0], &[0.0, 2.0], &[-2.0, 0.0]],
            ),
        ];
        for (adj, means) in expect {
            let pair = build_pair(&pr, adj).unwrap();
            let br = pair.branches();
            assert_eq!(br.len(), 2);
            let got = [br[0].pair.p(), br[0].pair.q(), br[1].pair.p(), br[1].pair.q()];
            for (m, want) in got.iter().zip(means) {
                let ms: Vec<f64> = m.components().iter().map(|c| c.mean).collect();
                assert_eq!(&ms[..], want, "{adj}");
            }
            let total: f64 = br.iter().map(|b| b.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reverse_is_an_involution() {
        let pair = build_pair(&params(7, 0.4, 3, 1.3), Adjacency::ZeroOut).unwrap();
        let rev = pair.reverse();
        assert!(rev.is_reversed());
        assert_eq!(rev.branches()[0].pair.p(), pair.branches()[0].pair.q());
        assert_eq!(rev.reverse(), pair);
    }

    #[test]
    fn reversed_replace_one_is_sign_flip() {
        let pair = build_pair(&params(7, 0.4, 3, 1.3), Adjacency::ReplaceOne).unwrap();
        let rev = pair.reverse();
        for (a, b) in pair.branches().iter().zip(rev.branches()) {
            assert_eq!(&a.pair.p().negated(), b.pair.p());
            assert_eq!(&a.pair.q().negated(), b.pair.q());
        }
    }

    #[test]
    fn mixture_validation_and_pruning() {
        assert!(GaussianMixture::new(1.0, [(0.5, 0.0)]).is_err());
        assert!(GaussianMixture::new(0.0, [(1.0, 0.0)]).is_err());
        assert!(GaussianMixture::new(1.0, [(1.0, f64::NAN)]).is_err());
        let m = GaussianMixture::new(1.0, [(0.0, 5.0), (0.25, 1.0), (0.75, 1.0)]).unwrap();
        assert_eq!(m.components(), &[Component { weight: 1.0, mean: 1.0 }]);
        assert!(MixturePair::new(
            GaussianMixture::point(1.0, 0.0).unwrap(),
            GaussianMixture::point(2.0, 0.0).unwrap()
        )
        .is_err());
    }

    #[test]
    fn loss_slope_matches_finite_difference() {
        let pair = truncated_pair(0.3, 0.8, Adjacency::ZeroOut).unwrap();
        for &t in &[-4.0, -1.0, 0.0, 0.7, 3.0] {
            let (_, slope) = pair.loss_and_slope(t);
            let h = 1e-6;
            let fd = (pair.privacy_loss(t + h) - pair.privacy_loss(t - h)) / (2.0 * h);
            assert!((slope - fd).abs() < 1e-6 * (1.0 + fd.abs()), "t={t}");
        }
    }

    #[test]
    fn adjacency_round_trips_through_strings() {
        for adj in Adjacency::ALL {
            assert_eq!(adj.as_str().parse::<Adjacency>().unwrap(), adj);
        }
        assert!("swap".parse::<Adjacency>().is_err());
    }
}
