//! Values frozen from an independent adaptive-quadrature computation of the
//! same quantities, plus one calibration regression pin.

use tpdp_core::oracle::{exact_mechanism_delta, ScalarLayout, WorstCaseInstance};
use tpdp_core::pld::truncated_profile;
use tpdp_core::{compare, AccountingOptions, Adjacency, EtaRule, Target, TruncatedPoissonParams};

fn instance(n: u64, p: f64, b: u64, sigma: f64, adj: Adjacency, layout: ScalarLayout) -> WorstCaseInstance {
    WorstCaseInstance::new(TruncatedPoissonParams::new(n, p, b, sigma).unwrap(), adj).with_layout(layout)
}

#[test]
fn exact_mechanism_deltas() {
    let cases = [
        (
            instance(3, 0.5, 1, 1.0, Adjacency::AddRemove, ScalarLayout::Aligned),
            0.0,
            0.047865615318503286,
        ),
        (
            instance(3, 0.5, 1, 1.0, Adjacency::AddRemove, ScalarLayout::Opposed),
            0.5,
            0.08587163261804717,
        ),
        (
            instance(8, 0.6, 3, 0.5, Adjacency::ReplaceOne, ScalarLayout::Aligned),
            1.0,
            0.18164553450471763,
        ),
        (
            instance(10, 0.3, 2, 0.8, Adjacency::ZeroOut, ScalarLayout::Opposed),
            0.5,
            0.038454906931090126,
        ),
    ];
    for (inst, eps, want) in cases {
        let got = exact_mechanism_delta(&inst, eps).unwrap();
        assert!((got - want).abs() <= 1e-10, "{inst:?} at {eps}: {got} vs {want}");
    }
}

#[test]
fn three_element_add_remove_profile() {
    // branch weights (1/4, 3/4), q = 2/9; each branch integrated separately
    let params = TruncatedPoissonParams::new(3, 0.5, 1, 1.0).unwrap();
    let profile = truncated_profile(&params, Adjacency::AddRemove, 1, &AccountingOptions::default()).unwrap();
    for (eps, exact) in [(0.0, 0.16164719734135102), (1.0, 0.057930577180316675)] {
        let d = profile.delta(eps);
        assert!(d >= exact && d <= exact + 1e-4, "eps {eps}: {d} vs {exact}");
    }
    let inst = instance(3, 0.5, 1, 1.0, Adjacency::AddRemove, ScalarLayout::Aligned);
    assert!(exact_mechanism_delta(&inst, 1.0).unwrap() <= profile.delta(1.0));
}

#[test]
fn calibration_regression() {
    let target = Target::new(1.0, 1e-6).unwrap();
    let options = AccountingOptions::default();
    let r = compare(
        100_000,
        1e-2,
        1100,
        Adjacency::AddRemove,
        100,
        target,
        EtaRule::UnionBound,
        &options,
    )
    .unwrap();
    assert_eq!(r.sigma_tight, 1.34368896484375);
    assert!(r.sigma_naive.is_infinite());
    assert!((r.truncation_prob_per_step - 8.209699106613396e-4).abs() <= 1e-15);
    assert!((r.utilization - 1000.0 / 1100.0).abs() <= 1e-15);
}
