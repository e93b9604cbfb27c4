use num_rational::Ratio;
use proptest::prelude::*;

use supportsim::grpo::{clipped_term, group_advantages, ClipConfig};
use supportsim::metrics::PassMatrix;
use supportsim::rubric::{RewardReport, Verdict};

fn verdicts(bits: &[bool]) -> Vec<Verdict> {
    bits.iter()
        .enumerate()
        .map(|(i, &b)| Verdict {
            criterion_id: format!("c{i}"),
            satisfied: b,
            evidence: String::new(),
        })
        .collect()
}

fn rewards() -> impl Strategy<Value = Vec<Ratio<u64>>> {
    prop::collection::vec((0u64..=12, 1u64..=12), 1..24)
        .prop_map(|v| v.into_iter().map(|(n, d)| Ratio::new(n, d)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reward_is_the_exact_satisfied_fraction(bits in prop::collection::vec(any::<bool>(), 1..60)) {
        let report = RewardReport::from_verdicts("t", verdicts(&bits));
        let sat = bits.iter().filter(|b| **b).count() as u64;
        // Cross-multiplied, so no reduction is assumed.
        prop_assert_eq!(report.r_num * bits.len() as u64, sat * report.r_den);
        prop_assert_eq!(report.pass, sat == bits.len() as u64);
        prop_assert_eq!(report.pass, report.r() == Ratio::from_integer(1));
    }

    #[test]
    fn reward_is_monotone_and_order_free(bits in prop::collection::vec(any::<bool>(), 1..60), flip in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let base = RewardReport::from_verdicts("t", verdicts(&bits));
        let i = flip.index(bits.len());
        let mut more = bits.clone();
        more[i] = true;
        let up = RewardReport::from_verdicts("t", verdicts(&more));
        if bits[i] { prop_assert_eq!(up.r(), base.r()); } else { prop_assert!(up.r() > base.r()); }

        let mut shuffled = verdicts(&bits);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let perm = RewardReport::from_verdicts("t", shuffled);
        prop_assert_eq!((perm.r(), perm.pass), (base.r(), base.pass));
    }

    #[test]
    fn advantages_have_zero_mean(rs in rewards()) {
        let a = group_advantages(&rs, 0.0).unwrap().values;
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!(mean.abs() < 1e-9, "mean {}", mean);
        if rs.iter().all(|r| *r == rs[0]) {
            prop_assert!(a.iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn shifting_rewards_changes_nothing(rs in rewards(), n in 0u64..20, d in 1u64..20, eps in prop::sample::select(vec![0.0, 1e-4, 0.5])) {
        let c = Ratio::new(n, d);
        let shifted: Vec<_> = rs.iter().map(|r| r + c).collect();
        prop_assert_eq!(group_advantages(&shifted, eps).unwrap().values, group_advantages(&rs, eps).unwrap().values);
    }

    #[test]
    fn scaling_rewards_changes_nothing_without_eps(rs in rewards(), c in 1u64..50) {
        let scaled: Vec<_> = rs.iter().map(|r| r * c).collect();
        let a = group_advantages(&rs, 0.0).unwrap().values;
        let b = group_advantages(&scaled, 0.0).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn clip_is_identity_inside_the_band(lo in 0.01f64..0.5, extra in 0.0f64..0.45, t in 0.0f64..=1.0, adv in -5.0f64..5.0) {
        let hi = lo + extra;
        let cfg = ClipConfig::new(lo, hi).unwrap();
        let ratio = (1.0 - lo) + t * (lo + hi);
        prop_assert_eq!(clipped_term(ratio, adv, &cfg), ratio * adv);
    }

    #[test]
    fn clip_never_exceeds_the_unclipped_term(lo in 0.01f64..0.5, extra in 0.0f64..0.45, ratio in 0.0f64..4.0, adv in -5.0f64..5.0) {
        let hi = lo + extra;
        let cfg = ClipConfig::new(lo, hi).unwrap();
        prop_assert!(clipped_term(ratio, adv, &cfg) <= ratio * adv + 1e-12);
    }

    #[test]
    fn pass_rates_are_ordered(cells in (1usize..30, 1usize..6).prop_flat_map(|(n, k)| prop::collection::vec(prop::collection::vec(any::<bool>(), k), n))) {
        let tasks: Vec<String> = (0..cells.len()).map(|i| format!("t{i:02}")).collect();
        let m = PassMatrix::new(tasks, cells.clone()).unwrap();
        prop_assert!(m.pass_pow_k() <= m.pass_at_1());
        prop_assert!(m.pass_at_1() <= m.pass_at_k());
        let n = cells.len() as u64;
        let all = cells.iter().filter(|r| r.iter().all(|c| *c)).count() as u64;
        let any = cells.iter().filter(|r| r.iter().any(|c| *c)).count() as u64;
        let total = cells.iter().flatten().filter(|c| **c).count() as u64;
        prop_assert_eq!(m.pass_pow_k(), Ratio::new(all, n));
        prop_assert_eq!(m.pass_at_k(), Ratio::new(any, n));
        prop_assert_eq!(m.pass_at_1(), Ratio::new(total, n * m.runs() as u64));
        if m.runs() == 1 {
            prop_assert_eq!(m.pass_pow_k(), m.pass_at_k());
        }
    }
}
