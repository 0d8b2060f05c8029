//! Binomial probabilities in log space and the truncation-conditional
//! inclusion probability `q`.
//!
//! The pmf uses Loader's saddle-point expansion (Stirling remainder plus the
//! deviance term `bd0`), which keeps full relative precision for `n` far
//! beyond what differences of log-gamma values can resolve. Tails are summed
//! outward from the largest term and stop once terms fall below double
//! precision relative to that term, so the cost grows like `sqrt(n)` rather
//! than `n`.

use crate::error::{Error, Result};
use crate::math::{abs, exp, floor, ln, ln_1p, KahanSum};

/// Weight below which the truncated branch is treated as absent.
pub const BRANCH_FLOOR: f64 = 1e-300;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters `(n, p, B, sigma)` of the truncated Poisson sampled Gaussian sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncatedPoissonParams {
    n: u64,
    p: f64,
    max_batch: u64,
    sigma: f64,
}

impl TruncatedPoissonParams {
    /// Validates and builds the parameter tuple. `max_batch >= n` is legal and
    /// means the batch is never truncated.
    pub fn new(n: u64, p: f64, max_batch: u64, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: "dataset size must be at least 1",
            });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter {
                name: "p",
                reason: "sampling probability must lie in [0, 1]",
            });
        }
        if max_batch == 0 {
            return Err(Error::InvalidParameter {
                name: "B",
                reason: "maximum batch size must be at least 1",
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: "noise standard deviation must be positive and finite",
            });
        }
        Ok(Self { n, p, max_batch, sigma })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn max_batch(&self) -> u64 {
        self.max_batch
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Same sampling parameters with a different noise level.
    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.max_batch, sigma)
    }

    /// True when `|S| > B` is impossible.
    pub fn never_truncates(&self) -> bool {
        self.max_batch >= self.n
    }
}

// ln Gamma(n + 1) - (n + 1/2) ln n + n - ln(2 pi)/2 for n = 0..=15
#[allow(clippy::excessive_precision)]
const STIRLERR_SMALL: [f64; 16] = [
    0.0,
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n < 16 {
        return STIRLERR_SMALL[n as usize];
    }
    let x = n as f64;
    let xx = x * x;
    if n > 500 {
        (S0 - S1 / xx) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / xx) / xx) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / xx) / xx) / xx) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / xx) / xx) / xx) / xx) / x
    }
}

/// Deviance term `x ln(x / m) + m - x`, evaluated by series near `x = m`.
fn bd0(x: f64, m: f64) -> f64 {
    if abs(x - m) < 0.1 * (x + m) {
        let mut v = (x - m) / (x + m);
        let mut s = (x - m) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * ln(x / m) + m - x
    }
}

fn ln_pmf_unchecked(n: u64, k: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if k == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 { -bd0(nf, nf * q) - nf * p } else { nf * ln(q) };
    }
    if k == n {
        return if q < 0.1 { -bd0(nf, nf * p) - nf * q } else { nf * ln(p) };
    }
    let kf = k as f64;
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + ln(kf) + ln_1p(-kf / nf);
    lc - 0.5 * lf
}

/// `ln Pr[Binom(n, p) = k]`; `-inf` for impossible outcomes.
pub fn log_binom_pmf(n: u64, k: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Domain("binomial outcome k exceeds n"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain("binomial probability outside [0, 1]"));
    }
    Ok(ln_pmf_unchecked(n, k, p))
}

/// `Pr[Binom(n, p) = k]`.
pub fn binom_pmf(n: u64, k: u64, p: f64) -> Result<f64> {
    log_binom_pmf(n, k, p).map(exp)
}

fn mode(n: u64, p: f64) -> u64 {
    let m = floor((n as f64 + 1.0) * p);
    if m <= 0.0 {
        0
    } else {
        (m as u64).min(n)
    }
}

/// `ln sum_{k=lo}^{hi} Pr[Binom(n,p) = k]` for `lo <= hi <= n`, summed
/// outward from the largest term in the range.
fn ln_range_sum(n: u64, lo: u64, hi: u64, p: f64) -> f64 {
    // relative size below which further terms cannot change the sum
    const NEGLIGIBLE: f64 = -41.5; // ln(1e-18)
    let peak = mode(n, p).clamp(lo, hi);
    let ln_peak = ln_pmf_unchecked(n, peak, p);
    if ln_peak == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = KahanSum::default();
    sum.add(1.0);
    let mut k = peak;
    while k > lo {
        k -= 1;
        let r = ln_pmf_unchecked(n, k, p) - ln_peak;
        if r < NEGLIGIBLE {
            break;
        }
        sum.add(exp(r));
    }
    let mut k = peak;
    while k < hi {
        k += 1;
        let r = ln_pmf_unchecked(n, k, p) - ln_peak;
        if r < NEGLIGIBLE {
            break;
        }
        sum.add(exp(r));
    }
    ln_peak + ln(sum.value())
}

/// `(ln Pr[Binom(n,p) >= b], ln Pr[Binom(n,p) < b])`, each computed without
/// subtracting from one on the side that is small.
fn ln_split(n: u64, b: u64, p: f64) -> (f64, f64) {
    if b == 0 {
        return (0.0, f64::NEG_INFINITY);
    }
    if b > n {
        return (f64::NEG_INFINITY, 0.0);
    }
    if b > mode(n, p) {
        let upper = ln_range_sum(n, b, n, p);
        (upper, ln_1p(-exp(upper).min(1.0)))
    } else {
        let lower = ln_range_sum(n, 0, b - 1, p);
        (ln_1p(-exp(lower).min(1.0)), lower)
    }
}

/// `ln Pr[Binom(n, p) >= b]`.
pub fn ln_binom_sf_geq(n: u64, b: u64, p: f64) -> f64 {
    ln_split(n, b, p).0
}

/// `Pr[Binom(n, p) >= b]`: one for `b = 0`, zero for `b > n`.
pub fn binom_sf_geq(n: u64, b: u64, p: f64) -> f64 {
    exp(ln_binom_sf_geq(n, b, p))
}

/// `Pr[Binom(n, p) < b]`, the complement of [`binom_sf_geq`].
pub fn binom_cdf_lt(n: u64, b: u64, p: f64) -> f64 {
    exp(ln_split(n, b, p).1)
}

/// Weight of the truncated branch, `Pr[Binom(n - 1, p) >= B]`, or
/// [`Error::BranchAbsent`] below [`BRANCH_FLOOR`].
fn truncated_branch_weight(params: &TruncatedPoissonParams) -> Result<f64> {
    let w = binom_sf_geq(params.n - 1, params.max_batch, params.p);
    if w < BRANCH_FLOOR {
        Err(Error::BranchAbsent)
    } else {
        Ok(w)
    }
}

/// Probability that the distinguished example lands in the final batch given
/// that the other `n - 1` examples alone already fill it:
///
/// `q = Pr[Binom(n, p) >= B + 1] / Pr[Binom(n - 1, p) >= B] * B / n`.
///
/// Fails with [`Error::BranchAbsent`] when the conditioning event has
/// (numerically) zero probability, e.g. `B >= n` or `p = 0`.
pub fn truncation_q(params: &TruncatedPoissonParams) -> Result<f64> {
    truncated_branch_weight(params)?;
    let n = params.n;
    let b = params.max_batch;
    let ln_ratio = ln_binom_sf_geq(n, b + 1, params.p) - ln_binom_sf_geq(n - 1, b, params.p);
    Ok(exp(ln_ratio) * b as f64 / n as f64)
}

/// The same `q` as [`truncation_q`], as the literal sum over the size `s` of
/// the other examples' pre-truncation sample:
///
/// `p * sum_{s=B}^{n-1} Pr[Binom(n-1,p) = s] / Pr[Binom(n-1,p) >= B] * B / (s + 1)`.
///
/// Costs `O(n)` pmf evaluations; kept as the reference for the closed form.
pub fn truncation_q_direct(params: &TruncatedPoissonParams) -> Result<f64> {
    let tail = truncated_branch_weight(params)?;
    let n = params.n;
    let b = params.max_batch;
    let mut sum = KahanSum::default();
    for s in b..n {
        let pmf = exp(ln_pmf_unchecked(n - 1, s, params.p));
        sum.add(pmf * b as f64 / (s + 1) as f64);
    }
    Ok(params.p * sum.value() / tail)
}
