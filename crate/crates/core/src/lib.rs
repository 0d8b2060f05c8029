//! Privacy accounting for the truncated Poisson sampled Gaussian sum.
//!
//! Each example is included independently with probability `p`; if more
//! than `B` are drawn, a uniformly random size-`B` subset is kept. The sum of
//! the kept contributions receives Gaussian noise of standard deviation
//! `sigma`. This crate builds a branched dominating pair for one step,
//! discretizes its privacy loss distribution, composes it over `T` steps and
//! answers `delta(eps)` / `eps(delta)` queries. It also provides exact
//! oracles and samplers for small instances, and noise calibration.
//!
//! Without the default `std` feature the crate is `no_std` and only needs
//! `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod binom;
pub mod calibrate;
pub mod error;
mod fft;
pub mod math;
pub mod oracle;
pub mod pairs;
pub mod pld;
pub mod sampler;

pub use binom::{
    binom_cdf_lt, binom_pmf, binom_sf_geq, log_binom_pmf, truncation_q, truncation_q_direct, TruncatedPoissonParams,
};
pub use calibrate::{calibrate_sigma, compare, naive_bound, ComparisonReport, EtaRule, NaiveProfile, Target};
pub use error::{Error, Result};
pub use pairs::{build_pair, Adjacency, BranchedDominatingPair, GaussianMixture, MixturePair};
pub use pld::{
    account, account_poisson, AccountingOptions, AccountingResult, DirectionPolicy, DiscretePld, Estimate,
    PrivacyProfile, Query,
};
