//! Batch samplers for the truncated Poisson scheme and exact subset laws for
//! small datasets.
//!
//! Elements are labelled `1..=n`; element 1 is the distinguished example
//! that is present in `D` and absent from `D'`. Subsets in a [`SubsetLaw`]
//! are bitmasks with bit `i - 1` standing for element `i`.
//!
//! Randomness comes from a `ChaCha20Rng` seeded by `seed_from_u64`, so draws
//! are reproducible across platforms. Coins use one `u64` each and succeed
//! when the draw is below `p * 2^64`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::binom::binom_pmf;
use crate::error::{Error, Result};

/// Largest dataset size accepted by [`enumerate_law`].
pub const MAX_ENUMERATION_N: u64 = 12;

/// Whether the distinguished example (element 1) is part of the dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Distinguished {
    Present,
    Absent,
}

/// Which sampler a law or draw refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Procedure {
    /// Independent `Bernoulli(p)` inclusion, then a uniform size-`B`
    /// subset of the sample when it overflows.
    Truncated,
    /// The two-stage process: draw the other elements' batch first, then
    /// decide the distinguished element's fate from `s = |S_{n-1}|`.
    Equivalent,
}

/// Output of one run of the truncated Poisson sampler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedDraw {
    /// Sorted element labels in the batch.
    pub batch: Vec<usize>,
    /// Size of the Poisson sample before truncation.
    pub sampled: usize,
}

impl TruncatedDraw {
    pub fn truncated(&self) -> bool {
        self.sampled > self.batch.len()
    }
}

/// Internal randomness of one run of the two-stage process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalentState {
    /// Uniform ordering of elements `2..=n`.
    pub permutation: Vec<usize>,
    /// Number of elements among `2..=n` that were sampled.
    pub others_sampled: usize,
    /// Whether element 1 passed its first coin.
    pub first_coin: bool,
    /// Second coin, drawn only when `others_sampled >= B`: element 1 is kept
    /// when both coins succeed.
    pub second_coin: Option<bool>,
}

/// Output of one run of the two-stage process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivalentDraw {
    /// Sorted element labels in the batch.
    pub batch: Vec<usize>,
    pub state: EquivalentState,
}

fn check(n: u64, p: f64, max_batch: u64) -> Result<()> {
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
    Ok(())
}

/// A reproducible stream of batches.
#[derive(Clone, Debug)]
pub struct BatchSampler {
    rng: ChaCha20Rng,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    fn coin(&mut self, p: f64) -> bool {
        let draw = self.rng.next_u64();
        // p * 2^64 saturates to u64::MAX for p = 1
        p >= 1.0 || draw < (p * 18_446_744_073_709_551_616.0) as u64
    }

    /// Fisher-Yates over the last `k` positions so that `items[len - k..]`
    /// is a uniform `k`-subset in uniform order.
    fn shuffle_tail(&mut self, items: &mut [usize], k: usize) {
        let len = items.len();
        for i in (len - k..len).rev() {
            let j = self.rng.random_range(0..=i as u64) as usize;
            items.swap(i, j);
        }
    }

    /// One batch from the truncated Poisson sampler. Draw order: one coin per
    /// dataset element in label order, then the subset shuffle on overflow.
    pub fn truncated(&mut self, n: u64, p: f64, max_batch: u64, distinguished: Distinguished) -> Result<TruncatedDraw> {
        check(n, p, max_batch)?;
        let first = match distinguished {
            Distinguished::Present => 1,
            Distinguished::Absent => 2,
        };
        let mut batch: Vec<usize> = (first..=n as usize).filter(|_| self.coin(p)).collect();
        let sampled = batch.len();
        let b = max_batch.min(usize::MAX as u64) as usize;
        if sampled > b {
            self.shuffle_tail(&mut batch, b);
            batch.drain(..sampled - b);
            batch.sort_unstable();
        }
        Ok(TruncatedDraw { batch, sampled })
    }

    /// One batch from the two-stage process. Draw order: a full shuffle of
    /// `2..=n`, `n - 1` coins for the others' batch size, the first coin of
    /// element 1, then its second coin when the others filled the batch.
    pub fn equivalent(
        &mut self,
        n: u64,
        p: f64,
        max_batch: u64,
        distinguished: Distinguished,
    ) -> Result<EquivalentDraw> {
        check(n, p, max_batch)?;
        let mut permutation: Vec<usize> = (2..=n as usize).collect();
        let len = permutation.len();
        self.shuffle_tail(&mut permutation, len.saturating_sub(1));
        let others_sampled = (0..len).filter(|_| self.coin(p)).count();
        let first_coin = self.coin(p);
        let b = max_batch.min(usize::MAX as u64) as usize;
        let second_coin = (others_sampled >= b).then(|| self.coin(b as f64 / (others_sampled + 1) as f64));

        let mut batch: Vec<usize> = match distinguished {
            Distinguished::Absent => permutation[..others_sampled.min(b)].to_vec(),
            Distinguished::Present if others_sampled < b => {
                let mut v = permutation[..others_sampled].to_vec();
                if first_coin {
                    v.push(1);
                }
                v
            }
            Distinguished::Present if first_coin && second_coin == Some(true) => {
                let mut v = permutation[..b - 1].to_vec();
                v.push(1);
                v
            }
            Distinguished::Present => permutation[..b].to_vec(),
        };
        batch.sort_unstable();
        Ok(EquivalentDraw {
            batch,
            state: EquivalentState {
                permutation,
                others_sampled,
                first_coin,
                second_coin,
            },
        })
    }
}

/// One truncated Poisson batch from a fresh stream seeded with `seed`.
pub fn sample_truncated(n: u64, p: f64, max_batch: u64, seed: u64) -> Result<TruncatedDraw> {
    BatchSampler::new(seed).truncated(n, p, max_batch, Distinguished::Present)
}

/// One run of the two-stage process from a fresh stream seeded with `seed`.
pub fn sample_equivalent(
    n: u64,
    p: f64,
    max_batch: u64,
    distinguished: Distinguished,
    seed: u64,
) -> Result<EquivalentDraw> {
    BatchSampler::new(seed).equivalent(n, p, max_batch, distinguished)
}

/// Exact distribution over batches for `n <= 12`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetLaw {
    n: u32,
    probabilities: BTreeMap<u32, f64>,
}

impl SubsetLaw {
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Batch bitmask to probability; subsets with probability zero may be
    /// absent.
    pub fn probabilities(&self) -> &BTreeMap<u32, f64> {
        &self.probabilities
    }

    pub fn probability(&self, mask: u32) -> f64 {
        self.probabilities.get(&mask).copied().unwrap_or(0.0)
    }

    /// Probability that element `label` is in the batch.
    pub fn inclusion(&self, label: u32) -> f64 {
        let bit = 1u32 << (label - 1);
        self.probabilities
            .iter()
            .filter(|(m, _)| *m & bit != 0)
            .map(|(_, w)| w)
            .sum()
    }

    fn add(&mut self, mask: u32, w: f64) {
        if w > 0.0 {
            *self.probabilities.entry(mask).or_insert(0.0) += w;
        }
    }

    /// Spreads `w` uniformly over the `size`-subsets of `pool`.
    fn add_uniform(&mut self, pool: u32, size: u32, extra: u32, w: f64) {
        let count = subsets_of_size(pool, size).count();
        let share = w / count as f64;
        for u in subsets_of_size(pool, size) {
            self.add(u | extra, share);
        }
    }
}

fn subsets_of(mask: u32) -> impl Iterator<Item = u32> {
    let mut next = Some(mask);
    core::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 { None } else { Some((cur - 1) & mask) };
        Some(cur)
    })
}

fn subsets_of_size(mask: u32, size: u32) -> impl Iterator<Item = u32> {
    subsets_of(mask).filter(move |u| u.count_ones() == size)
}

fn power(x: f64, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * x)
}

/// Exact law of the batch produced by `procedure`, by enumeration.
pub fn enumerate_law(
    n: u64,
    p: f64,
    max_batch: u64,
    procedure: Procedure,
    distinguished: Distinguished,
) -> Result<SubsetLaw> {
    check(n, p, max_batch)?;
    if n > MAX_ENUMERATION_N {
        return Err(Error::TooLarge {
            what: "dataset size",
            limit: MAX_ENUMERATION_N,
        });
    }
    let n32 = n as u32;
    let b = max_batch.min(n) as u32;
    let all = (1u32 << n32) - 1;
    let others = all & !1;
    let mut law = SubsetLaw {
        n: n32,
        probabilities: BTreeMap::new(),
    };
    match procedure {
        Procedure::Truncated => {
            let dataset = match distinguished {
                Distinguished::Present => all,
                Distinguished::Absent => others,
            };
            let size = dataset.count_ones();
            for sample in subsets_of(dataset) {
                let k = sample.count_ones();
                let w = power(p, k) * power(1.0 - p, size - k);
                if k <= b {
                    law.add(sample, w);
                } else {
                    law.add_uniform(sample, b, 0, w);
                }
            }
        }
        Procedure::Equivalent => {
            for s in 0..n32 {
                let ps = binom_pmf(n - 1, s as u64, p)?;
                match distinguished {
                    Distinguished::Absent => law.add_uniform(others, s.min(b), 0, ps),
                    Distinguished::Present if s < b => {
                        law.add_uniform(others, s, 0, ps * (1.0 - p));
                        law.add_uniform(others, s, 1, ps * p);
                    }
                    Distinguished::Present => {
                        let kept = p * b as f64 / (s + 1) as f64;
                        law.add_uniform(others, b - 1, 1, ps * kept);
                        law.add_uniform(others, b, 0, ps * (1.0 - kept));
                    }
                }
            }
        }
    }
    Ok(law)
}

/// Total variation distance between two laws over the same ground set.
pub fn tv_distance(a: &SubsetLaw, b: &SubsetLaw) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::InvalidParameter {
            name: "n",
            reason: "laws must share the ground set",
        });
    }
    let mut keys: Vec<u32> = a.probabilities.keys().chain(b.probabilities.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    Ok(0.5
        * keys
            .iter()
            .map(|&m| (a.probability(m) - b.probability(m)).abs())
            .sum::<f64>())
}
