use std::collections::BTreeMap;

use tpdp_core::binom::truncation_q;
use tpdp_core::calibrate::{truncation_probability, NaiveProfile};
use tpdp_core::pairs::branch_weights;
use tpdp_core::pld::truncated_profile;
use tpdp_core::sampler::{enumerate_law, tv_distance, BatchSampler, Distinguished, Procedure};
use tpdp_core::{
    account, calibrate_sigma, compare, AccountingOptions, AccountingResult, EtaRule, Query, Target,
    TruncatedPoissonParams,
};

use crate::config::JobConfig;
use crate::output::Record;
use crate::CliError;

/// Datasets up to this size are simulated by exact enumeration.
pub const EXACT_SIMULATION_MAX_N: u64 = 8;

fn params(c: &JobConfig) -> Result<TruncatedPoissonParams, CliError> {
    Ok(TruncatedPoissonParams::new(
        JobConfig::require(c.n, "n")?,
        JobConfig::require(c.p, "p")?,
        JobConfig::require(c.max_batch, "B")?,
        JobConfig::require(c.sigma, "sigma")?,
    )?)
}

/// Parameters for commands that search over `sigma`.
fn sampling(c: &JobConfig) -> Result<(u64, f64, u64), CliError> {
    Ok((
        JobConfig::require(c.n, "n")?,
        JobConfig::require(c.p, "p")?,
        JobConfig::require(c.max_batch, "B")?,
    ))
}

fn params_record(p: &TruncatedPoissonParams) -> Record {
    Record::new()
        .int("n", p.n())
        .float("p", p.p())
        .int("B", p.max_batch())
        .float("sigma", p.sigma())
}

fn settings(mut r: Record, c: &JobConfig) -> Record {
    let AccountingOptions {
        grid_step,
        direction,
        estimate,
    } = c.options;
    r = r
        .int("steps", c.steps)
        .text("adjacency", c.adjacency.as_str())
        .float("grid_step", grid_step)
        .text("direction", direction.as_str())
        .text("estimate", estimate.as_str());
    r
}

fn query_record(command: &'static str, params: &TruncatedPoissonParams, r: &AccountingResult, c: &JobConfig) -> Record {
    let head = Record::new()
        .text("command", command)
        .float("epsilon", r.epsilon)
        .float("delta", r.delta)
        .group("params", params_record(params));
    settings(head, c)
}

pub fn delta(c: &JobConfig) -> Result<Record, CliError> {
    let params = params(c)?;
    let epsilon = JobConfig::require(c.epsilon, "epsilon")?;
    let r = account(&params, c.adjacency, c.steps, Query::Delta { epsilon }, &c.options)?;
    Ok(query_record("delta", &params, &r, c))
}

pub fn epsilon(c: &JobConfig) -> Result<Record, CliError> {
    let params = params(c)?;
    let delta = JobConfig::require(c.delta, "delta")?;
    let r = account(&params, c.adjacency, c.steps, Query::Epsilon { delta }, &c.options)?;
    Ok(query_record("epsilon", &params, &r, c))
}

pub fn curve(c: &JobConfig) -> Result<Record, CliError> {
    let params = params(c)?;
    let grid = match (&c.epsilons, c.epsilon) {
        (Some(g), _) => g.clone(),
        (None, Some(e)) => vec![e],
        (None, None) => return Err(CliError::Usage("missing required value --epsilons".into())),
    };
    if grid.is_empty() || grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage(
            "the epsilon grid must be nonempty, finite and strictly ascending".into(),
        ));
    }
    let tight = truncated_profile(&params, c.adjacency, c.steps, &c.options)?;
    let naive = NaiveProfile::new(&params, c.adjacency, c.steps, EtaRule::UnionBound, &c.options)?;
    let rows = grid
        .iter()
        .map(|&eps| {
            Record::new()
                .float("epsilon", eps)
                .float("delta_tight", tight.delta(eps))
                .float("delta_naive", naive.delta(eps))
        })
        .collect();
    let head = Record::new()
        .text("command", "curve")
        .group("params", params_record(&params));
    Ok(settings(head, c).rows("rows", rows))
}

fn target(c: &JobConfig) -> Result<Target, CliError> {
    Ok(Target::new(
        JobConfig::require(c.epsilon, "epsilon")?,
        JobConfig::require(c.delta, "delta")?,
    )?)
}

pub fn calibrate(c: &JobConfig) -> Result<Record, CliError> {
    let (n, p, b) = sampling(c)?;
    let t = target(c)?;
    let sigma = calibrate_sigma(n, p, b, c.adjacency, c.steps, t, &c.options)?;
    let head = Record::new()
        .text("command", "calibrate")
        .float("sigma", sigma)
        .float("target_epsilon", t.epsilon)
        .float("target_delta", t.delta)
        .group("params", Record::new().int("n", n).float("p", p).int("B", b));
    Ok(settings(head, c))
}

pub fn compare_cmd(c: &JobConfig) -> Result<Record, CliError> {
    let (n, p, b) = sampling(c)?;
    let t = target(c)?;
    let r = compare(n, p, b, c.adjacency, c.steps, t, EtaRule::UnionBound, &c.options)?;
    let head = Record::new()
        .text("command", "compare")
        .float("sigma_tight", r.sigma_tight)
        .float("sigma_naive", r.sigma_naive)
        .float("target_epsilon", r.target_epsilon)
        .float("target_delta", r.target_delta)
        .float("truncation_prob_per_step", r.truncation_prob_per_step)
        .float("expected_batch", r.expected_batch)
        .float("utilization", r.utilization)
        .group(
            "params",
            Record::new().int("n", r.n).float("p", r.p).int("B", r.max_batch),
        );
    Ok(settings(head, c))
}

/// Probability that element 1 is in the batch.
fn inclusion_probability(params: &TruncatedPoissonParams) -> Result<f64, CliError> {
    let (w1, w2) = branch_weights(params);
    let truncated = if w2 > 0.0 {
        w2 * truncation_q(params).unwrap_or(0.0)
    } else {
        0.0
    };
    Ok(params.p() * w1 + truncated)
}

fn empirical_tv(a: &BTreeMap<(bool, usize), u64>, b: &BTreeMap<(bool, usize), u64>, trials: u64) -> f64 {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    let diff: u64 = keys
        .into_iter()
        .map(|k| a.get(k).copied().unwrap_or(0).abs_diff(b.get(k).copied().unwrap_or(0)))
        .sum();
    0.5 * diff as f64 / trials as f64
}

pub fn simulate(c: &JobConfig) -> Result<Record, CliError> {
    let (n, p, b) = sampling(c)?;
    let trials = JobConfig::require(c.trials, "trials")?;
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    // sigma plays no part in sampling
    let params = TruncatedPoissonParams::new(n, p, b, 1.0)?;
    let truncation_probability = truncation_probability(&params);
    let inclusion_probability = inclusion_probability(&params)?;

    let (mode, tv_present, tv_absent, truncation_frequency, inclusion_frequency);
    if n <= EXACT_SIMULATION_MAX_N {
        mode = "exact";
        let law = |proc, d| enumerate_law(n, p, b, proc, d);
        let present = law(Procedure::Truncated, Distinguished::Present)?;
        tv_present = tv_distance(&present, &law(Procedure::Equivalent, Distinguished::Present)?)?;
        tv_absent = tv_distance(
            &law(Procedure::Truncated, Distinguished::Absent)?,
            &law(Procedure::Equivalent, Distinguished::Absent)?,
        )?;
        truncation_frequency = truncation_probability;
        inclusion_frequency = present.inclusion(1);
    } else {
        mode = "monte-carlo";
        let mut sampler = BatchSampler::new(c.seed);
        let mut counts: [BTreeMap<(bool, usize), u64>; 4] = Default::default();
        let (mut truncated, mut included) = (0u64, 0u64);
        let key = |batch: &[usize]| (batch.first() == Some(&1), batch.len());
        for _ in 0..trials {
            let t = sampler.truncated(n, p, b, Distinguished::Present)?;
            truncated += t.truncated() as u64;
            included += (t.batch.first() == Some(&1)) as u64;
            *counts[0].entry(key(&t.batch)).or_insert(0) += 1;
            let e = sampler.equivalent(n, p, b, Distinguished::Present)?;
            *counts[1].entry(key(&e.batch)).or_insert(0) += 1;
            let t = sampler.truncated(n, p, b, Distinguished::Absent)?;
            *counts[2].entry(key(&t.batch)).or_insert(0) += 1;
            let e = sampler.equivalent(n, p, b, Distinguished::Absent)?;
            *counts[3].entry(key(&e.batch)).or_insert(0) += 1;
        }
        tv_present = empirical_tv(&counts[0], &counts[1], trials);
        tv_absent = empirical_tv(&counts[2], &counts[3], trials);
        truncation_frequency = truncated as f64 / trials as f64;
        inclusion_frequency = included as f64 / trials as f64;
    }
    Ok(Record::new()
        .text("command", "simulate")
        .text("mode", mode)
        .float("tv_distance_present", tv_present)
        .float("tv_distance_absent", tv_absent)
        .float("truncation_frequency", truncation_frequency)
        .float("truncation_probability", truncation_probability)
        .float("inclusion_frequency", inclusion_frequency)
        .float("inclusion_probability", inclusion_probability)
        .int("trials", trials)
        .int("seed", c.seed)
        .group("params", Record::new().int("n", n).float("p", p).int("B", b)))
}
