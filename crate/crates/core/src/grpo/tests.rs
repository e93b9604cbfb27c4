#![allow(clippy::needless_range_loop)]

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::rollout::Environment;
use crate::suite::{builtin_prompts, suite_world};

fn r(n: u64, d: u64) -> Ratio<u64> {
    Ratio::new(n, d)
}

/// Plain f64 reference: population std, no exact arithmetic.
fn reference(rewards: &[f64], eps: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    rewards.iter().map(|x| (x - mean) / (std + eps)).collect()
}

#[test]
fn advantage_examples() {
    assert_eq!(
        group_advantages(&[r(1, 1); 4], 1e-4).unwrap().values,
        vec![0.0; 4]
    );
    assert_eq!(
        group_advantages(&[r(1, 1), r(0, 1)], 0.0).unwrap().values,
        vec![1.0, -1.0]
    );
    let got = group_advantages(&[r(3, 4), r(1, 4), r(1, 1), r(0, 1)], 0.0)
        .unwrap()
        .values;
    let want = reference(&[0.75, 0.25, 1.0, 0.0], 0.0);
    for ((g, w), lit) in got
        .iter()
        .zip(&want)
        .zip([0.6325, -0.6325, 1.2649, -1.2649])
    {
        assert!((g - w).abs() < 1e-12);
        assert!((g - lit).abs() < 1e-4, "{g} vs {lit}");
    }
    assert_eq!(group_advantages(&[], 0.0), Err(AdvantageError::EmptyGroup));
}

#[test]
fn clip_examples() {
    let c = ClipConfig::default();
    assert_eq!(clipped_term(1.0, 0.5, &c), 0.5);
    assert!((clipped_term(2.0, 1.0, &c) - 1.28).abs() < 1e-12);
    assert!((clipped_term(0.5, -1.0, &c) + 0.8).abs() < 1e-12);
    assert!(ClipConfig::new(0.3, 0.2).is_err());
    assert!(ClipConfig::new(0.0, 0.2).is_err());
    assert!(ClipConfig::new(0.2, 1.0).is_err());
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    states: usize,
    actions: usize,
    samples: usize,
) -> (ToyPolicy, Vec<Sample>) {
    let names: Vec<String> = (0..states).map(|i| format!("s{i}")).collect();
    let mut policy = ToyPolicy::uniform(
        names.iter().map(|n| (n.as_str(), actions)),
        rng.gen_range(0.5..2.0),
    );
    for row in policy.logits.values_mut() {
        for l in row.iter_mut() {
            *l = rng.gen_range(-2.0..2.0);
        }
    }
    let samples = (0..samples)
        .map(|_| {
            let state = names[rng.gen_range(0..states)].clone();
            let action = rng.gen_range(0..actions);
            let p = policy.prob(&state, action).unwrap();
            Sample {
                state,
                action,
                // Ratios spread across and beyond the clip band.
                old_prob: (p * rng.gen_range(0.6..1.5)).min(1.0),
                advantage: rng.gen_range(-2.0..2.0),
            }
        })
        .collect();
    (policy, samples)
}

fn finite_difference(policy: &ToyPolicy, samples: &[Sample], cfg: &ClipConfig, h: f64) -> Gradient {
    let mut out = Gradient::new();
    for (state, row) in &policy.logits {
        let mut g = vec![0.0; row.len()];
        for j in 0..row.len() {
            let mut up = policy.clone();
            up.logits.get_mut(state).unwrap()[j] += h;
            let mut down = policy.clone();
            down.logits.get_mut(state).unwrap()[j] -= h;
            g[j] = (up.surrogate(samples, cfg).unwrap() - down.surrogate(samples, cfg).unwrap())
                / (2.0 * h);
        }
        out.insert(state.clone(), g);
    }
    out
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = ClipConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 50 {
        let (policy, samples) = random_instance(&mut rng, 5, 4, 12);
        // Skip instances with a ratio within reach of a clip edge, where the surrogate has a kink.
        let near_edge = samples.iter().any(|s| {
            let rho = policy.prob(&s.state, s.action).unwrap() / s.old_prob;
            (rho - (1.0 - cfg.eps_low)).abs() < 1e-4 || (rho - (1.0 + cfg.eps_high)).abs() < 1e-4
        });
        if near_edge {
            continue;
        }
        let analytic = policy_gradient(&policy, &samples, &cfg).unwrap();
        let numeric = finite_difference(&policy, &samples, &cfg, 1e-6);
        let a: Vec<f64> = analytic.values().flatten().copied().collect();
        let n: Vec<f64> = numeric.values().flatten().copied().collect();
        let diff = a
            .iter()
            .zip(&n)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-8);
        assert!(
            diff / scale < 1e-5,
            "relative error {} on instance {checked}",
            diff / scale
        );
        checked += 1;
    }
}

#[test]
fn gradient_special_cases() {
    let cfg = ClipConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (policy, mut samples) = random_instance(&mut rng, 3, 4, 6);
    for s in &mut samples {
        s.advantage = 0.0;
    }
    let g = policy_gradient(&policy, &samples, &cfg).unwrap();
    assert!(g.values().flatten().all(|x| *x == 0.0));

    // Ratio 1: the surrogate gradient is A * grad log pi.
    let p = policy.probs("s1").unwrap();
    let one = [Sample {
        state: "s1".into(),
        action: 2,
        old_prob: p[2],
        advantage: 0.7,
    }];
    let g = policy_gradient(&policy, &one, &cfg).unwrap();
    for (j, gj) in g["s1"].iter().enumerate() {
        let dlog = (if j == 2 { 1.0 } else { 0.0 } - p[j]) / policy.temperature;
        assert!((gj - 0.7 * dlog).abs() < 1e-12);
    }
    assert!(g["s0"].iter().all(|x| *x == 0.0));

    let stale = [Sample {
        old_prob: 0.0,
        ..one[0].clone()
    }];
    assert!(matches!(
        policy_gradient(&policy, &stale, &cfg),
        Err(GradientError::StaleSample { .. })
    ));
}

#[test]
fn probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (policy, _) = random_instance(&mut rng, 4, 6, 0);
    for s in policy.logits.keys() {
        let sum: f64 = policy.probs(s).unwrap().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

fn env() -> Environment {
    Environment::new(suite_world(), builtin_prompts())
}

#[test]
fn bandit_choices_are_distinct_and_decodable() {
    let fam = BanditFamily::rubric_bandit(&suite_world());
    let fact = fam.task.rubric.iter().find_map(|c| match &c.check {
        crate::rubric::CheckSpec::ResponseContainsFact { fact } => Some(fact.clone()),
        _ => None,
    });
    let fact = fact.unwrap();
    assert_eq!(
        fam.responses.iter().filter(|r| r.contains(&fact)).count(),
        1
    );
}

#[test]
fn training_closes_the_loop() {
    let env = env();
    let family = BanditFamily::rubric_bandit(&env.world);
    let cfg = TrainConfig {
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train_toy(&env, &family, &cfg).unwrap();
    let early = out.curve[..10].iter().map(|p| p.mean_reward).sum::<f64>() / 10.0;
    assert!(early < 0.3, "early mean {early}");
    let reached = out.first_step_reaching(0.9, 10);
    assert!(
        reached.is_some_and(|s| s < 5000),
        "never reached 0.9: {:?}",
        out.curve.last()
    );
    assert_eq!(train_toy(&env, &family, &cfg).unwrap(), out);
}

#[test]
fn zero_learning_rate_keeps_the_policy() {
    let env = env();
    let family = BanditFamily::rubric_bandit(&env.world);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        steps: 60,
        ..TrainConfig::default()
    };
    let out = train_toy(&env, &family, &cfg).unwrap();
    assert_eq!(out.policy, family.initial_policy(1.0));
    let mean = out.curve.iter().map(|p| p.mean_reward).sum::<f64>() / out.curve.len() as f64;
    // A uniform policy scores (1/4 + 1/16 + 1/4) / 3 in expectation.
    assert!((mean - 3.0 / 16.0).abs() < 0.03, "mean {mean}");
}

#[test]
fn uniform_reward_gives_a_constant_curve() {
    let env = env();
    let mut family = BanditFamily::rubric_bandit(&env.world);
    family.task.rubric.truncate(1);
    family.task.rubric[0].check = crate::rubric::CheckSpec::PatternMatch {
        pattern: "never-said-anywhere".into(),
        forbid: true,
    };
    let cfg = TrainConfig {
        steps: 20,
        ..TrainConfig::default()
    };
    let out = train_toy(&env, &family, &cfg).unwrap();
    assert!(out
        .curve
        .iter()
        .all(|p| p.mean_reward == 1.0 && p.grad_norm == 0.0));
}

#[test]
fn divergence_is_reported() {
    let env = env();
    let family = BanditFamily::rubric_bandit(&env.world);
    let cfg = TrainConfig {
        learning_rate: 1e6,
        steps: 50,
        ..TrainConfig::default()
    };
    match train_toy(&env, &family, &cfg) {
        Err(TrainError::Divergence { curve, .. }) => assert!(!curve.is_empty()),
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|o| o.curve.len())
        ),
    }
}

#[test]
fn config_defaults_and_names() {
    let cfg: TrainConfig = serde_json::from_str(r#"{"G": 8, "learning_rate": 0.5}"#).unwrap();
    assert_eq!(
        (cfg.g, cfg.eps_low, cfg.eps_high, cfg.eps_std),
        (8, 0.2, 0.28, 1e-4)
    );
    assert!(serde_json::from_str::<TrainConfig>(r#"{"lr": 1}"#).is_err());
    let bad = TrainConfig {
        eps_low: 0.5,
        eps_high: 0.1,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train_toy(&env(), &BanditFamily::rubric_bandit(&suite_world()), &bad),
        Err(TrainError::Config(_))
    ));
}
