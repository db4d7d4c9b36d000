mod common;

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use stepgraph::gnn::Pooling;

fn check(seed: u64, pooling: Pooling, gcn_dims: &[usize], bottleneck: usize) {
    let (err, at) = common::worst_gradient_error(seed, pooling, gcn_dims, bottleneck);
    assert!(err < 1e-4, "seed {seed} {pooling:?}: {at} (rel {err})");
}

#[test]
fn attention_gradients_match_finite_differences() {
    for seed in 0..24 {
        check(seed, Pooling::Attention, &[8, 6, 5], 7);
    }
}

#[test]
fn baseline_pool_gradients_match_finite_differences() {
    for seed in 100..108 {
        check(seed, Pooling::Mean, &[8, 6, 5], 5);
        check(seed, Pooling::DegreeSum, &[8, 6, 5], 5);
    }
}

#[test]
fn full_width_layers_gradients() {
    for seed in 200..203 {
        check(seed, Pooling::Attention, &[64, 32, 32], 32);
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 20,
        rng_seed: RngSeed::Fixed(0x5eed),
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn gradients_match_for_random_seeds(seed in 1_000u64..1_000_000) {
        check(seed, Pooling::Attention, &[8, 6, 5], 6);
    }
}
