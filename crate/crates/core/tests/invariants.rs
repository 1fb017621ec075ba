//! Property tests for the model, strategy statistics and problem grammar.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smm_core::neural::{
    backward, entropy_confidence, forward, gradient_check, loss, sgd_step, ModelParams,
};
use smm_core::strategies::{SelectionRule, StrategyKind, StrategyStats};
use smm_core::{Number, Problem};

fn any_problem() -> impl Strategy<Value = Problem> {
    let mut all = Problem::all_additions();
    all.extend(Problem::all_counts());
    proptest::sample::select(all)
}

/// Initial parameters with biases and a scale factor drawn from `seed`, to
/// push activations away from the small-weight regime.
fn params_from(seed: u64, scale: f64) -> ModelParams {
    let mut p = ModelParams::init(seed, 16, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for (_, group) in p.groups_mut() {
        for v in group.iter_mut() {
            *v = *v * scale + rng.random_range(-0.1..0.1);
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn distributions_are_normalized(seed in any::<u64>(), scale in 0.1f64..8.0, problem in any_problem()) {
        let params = params_from(seed, scale);
        let (dist, trace) = forward(&params, &problem);
        let sum: f64 = dist.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(dist.probs().iter().all(|p| *p >= 0.0));
        let c = entropy_confidence(&dist);
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!(trace.gates.iter().all(|g| *g > 0.0 && *g < 1.0));
    }

    #[test]
    fn backward_is_pure(seed in any::<u64>(), problem in any_problem(), t in 0usize..10) {
        let params = params_from(seed, 1.0);
        let target = Number::from_index(t).unwrap();
        let (_, trace) = forward(&params, &problem);
        prop_assert_eq!(backward(&params, &trace, target), backward(&params, &trace, target));
        prop_assert_eq!(forward(&params, &problem).1, trace);
    }

    #[test]
    fn unused_embedding_rows_never_move(seed in any::<u64>(), problem in any_problem(), t in 0usize..10) {
        let params = params_from(seed, 1.0);
        let target = Number::from_index(t).unwrap();
        let (_, trace) = forward(&params, &problem);
        let mut next = params.clone();
        sgd_step(&mut next, &backward(&params, &trace, target), 0.1).unwrap();
        for token in Number::all() {
            if token != problem.a && token != problem.b {
                let before: Vec<u64> = params.num_embed.row(token.index()).iter().map(|v| v.to_bits()).collect();
                let after: Vec<u64> = next.num_embed.row(token.index()).iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(before, after);
            }
        }
        let other_op = 1 - problem.op.index();
        prop_assert_eq!(params.op_embed.row(other_op), next.op_embed.row(other_op));
    }

    #[test]
    fn small_steps_reduce_the_trained_loss(seed in any::<u64>(), problem in any_problem(), t in 0usize..10) {
        let params = ModelParams::init(seed, 16, 32).unwrap();
        let target = Number::from_index(t).unwrap();
        let (_, trace) = forward(&params, &problem);
        let mut next = params.clone();
        sgd_step(&mut next, &backward(&params, &trace, target), 0.01).unwrap();
        prop_assert!(loss(&next, &problem, target) < loss(&params, &problem, target));
    }

    #[test]
    fn weights_stay_in_bounds(
        outcomes in proptest::collection::vec((0usize..3, any::<bool>()), 0..400),
        beta in 0.01f64..0.99,
        floor in 0.01f64..0.49,
    ) {
        let mut stats = StrategyStats::new(0.5, 0.5, 0.5, beta, floor).unwrap();
        let kinds = [StrategyKind::RetrievalAdd, StrategyKind::FingerCount, StrategyKind::RetrievalCount];
        for (k, correct) in outcomes {
            stats.update(kinds[k], correct);
            for w in [stats.w_retrieval_add, stats.w_finger, stats.w_retrieval_count] {
                prop_assert!(w >= floor && w <= 1.0);
            }
        }
    }

    #[test]
    fn finger_choice_grows_with_its_weight(
        w_r in 0.05f64..1.0,
        w_f in 0.05f64..0.95,
        bump in 0.0f64..0.05,
        c in 0.0f64..=1.0,
    ) {
        for rule in [SelectionRule::Proportional, SelectionRule::ConfidenceWeighted] {
            let low = StrategyStats::new(w_r, w_f, 0.5, 0.05, 0.05).unwrap();
            let high = StrategyStats::new(w_r, w_f + bump, 0.5, 0.05, 0.05).unwrap();
            prop_assert!(
                high.retrieval_probability(rule, c) <= low.retrieval_probability(rule, c) + 1e-15
            );
        }
    }

    #[test]
    fn problems_print_and_parse(problem in any_problem()) {
        let text = problem.to_string();
        prop_assert_eq!(text.parse::<Problem>().unwrap(), problem);
    }
}

#[test]
fn gradient_check_over_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut all = Problem::all_additions();
    all.extend(Problem::all_counts());
    for _ in 0..20 {
        let params = params_from(rng.random(), rng.random_range(0.5..3.0));
        let problem = all[rng.random_range(0..all.len())];
        let target = Number::from_index(rng.random_range(0..10)).unwrap();
        let report = gradient_check(&params, &problem, target, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?} on {problem}");
    }
}

#[test]
fn untrained_embeddings_are_nearly_orthogonal_on_average() {
    // Independent uniform vectors in 16 dimensions: E[cos] = 0 with standard
    // deviation about 1/4 per pair, so the mean of 45 pairs over 20 seeds
    // should sit well inside ±0.05.
    let mut total = 0.0;
    let mut pairs = 0;
    for seed in 0..20 {
        let p = ModelParams::init(seed, 16, 32).unwrap();
        for i in 0..10 {
            for j in (i + 1)..10 {
                let (u, v) = (p.num_embed.row(i), p.num_embed.row(j));
                let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
                total += dot / (norm(u) * norm(v));
                pairs += 1;
            }
        }
    }
    let mean = total / pairs as f64;
    assert!(mean.abs() < 0.05, "{mean}");
}
