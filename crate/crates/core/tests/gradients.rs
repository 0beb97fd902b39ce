mod common;

use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (err, op) = worst_op_error(50, &mut rng);
    assert!(err <= 1e-4, "{op}: relative error {err:e}");
}

#[test]
fn lookup_and_param_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let err = worst_param_op_error(50, &mut rng);
    assert!(err <= 1e-4, "relative error {err:e}");
}

#[test]
fn transition_score_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = transition_model_error(50, &mut rng);
    assert!(err <= 1e-3, "relative error {err:e}");
}

#[test]
fn graph_score_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let err = graph_model_error(50, &mut rng);
    assert!(err <= 1e-3, "relative error {err:e}");
}
