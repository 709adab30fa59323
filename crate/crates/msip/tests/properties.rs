use msip::agents::{run, AgentConfig, AgentKind};
use msip::comparison_learning::{weight_from_upsilon, SelfNormalizedWeights};
use msip::env::argmax_first;
use msip::feedback::{averaged_label, DeviationSchedule, FeedbackPanel, PairContext, ScheduleKind};
use msip::instances::random_tiny;
use msip::linalg::Gram;
use msip::model::{comparison_prob, LinkFunction, LinkKind, Trajectory};
use msip::transition_learning::transition_bonus;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn link() -> impl Strategy<Value = LinkFunction> {
    prop_oneof![Just(LinkFunction::new(LinkKind::ClippedLinear)), Just(LinkFunction::new(LinkKind::Logistic))]
}

fn schedule() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![
        Just(ScheduleKind::Zero),
        Just(ScheduleKind::Uniform),
        (0.01f64..=1.0).prop_map(|fraction| ScheduleKind::FrontLoaded { fraction }),
        Just(ScheduleKind::UninformativeCase2),
        (-1.0f64..1.0, 0.01f64..=1.0).prop_map(|(threshold, fraction)| ScheduleKind::OptimismAdversarial {
            decoy: vec![1.0, 0.0],
            threshold,
            fraction
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn link_monotone_and_symmetric(l in link(), x in -5.0f64..5.0, dx in 0.0f64..3.0) {
        prop_assert!(l.value(x + dx) >= l.value(x));
        prop_assert!((l.value(x) + l.value(-x) - 1.0).abs() <= 1e-12);
        let v = l.value(x);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn comparison_antisymmetric_and_shift_invariant(seed in 0u64..500, shift in -0.3f64..0.3, l in link()) {
        let inst = random_tiny(2, 2, 2, 2, 2, seed);
        let a = Trajectory::new(vec![(0, 0), (1, 1)], 0);
        let b = Trajectory::new(vec![(1, 0), (0, 1)], 0);
        let r = &inst.reward;
        let p = comparison_prob(r, &l, &a, &b);
        let q = comparison_prob(r, &l, &b, &a);
        prop_assert!((p + q - 1.0).abs() <= 1e-12);
        // a constant per-trajectory offset cancels in the difference
        let d = r.value(&a.steps) - r.value(&b.steps);
        prop_assert!((l.value((r.value(&a.steps) + shift) - (r.value(&b.steps) + shift)) - l.value(d)).abs() <= 1e-12);
    }

    #[test]
    fn budget_never_exceeded(kind in schedule(), omega in 0.0f64..30.0, m in 1usize..6, k in 1usize..400, seed in 0u64..1000) {
        let mut panel = FeedbackPanel::shared(DeviationSchedule::new(kind, omega), m, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut avg = 0.0;
        for ep in 1..=k {
            let x = [((ep * 7 + seed as usize) % 11) as f64 / 5.0 - 1.0, 0.3];
            let p_star = ((ep * 13 + seed as usize) % 101) as f64 / 100.0;
            let (labels, diag) = panel.sample_labels(&PairContext { p_star, features: &x }, ep, &mut rng);
            prop_assert_eq!(labels.len(), m);
            prop_assert!(diag.p.iter().all(|p| (0.0..=1.0).contains(p)));
            avg += (diag.p.iter().sum::<f64>() / m as f64 - p_star).abs();
        }
        prop_assert!(panel.max_spent() <= omega + 1e-12);
        prop_assert!(avg <= omega + 1e-9);
    }

    #[test]
    fn averaged_loss_decomposes(labels in prop::collection::vec(0u8..=1, 1..40), q in 0.0f64..1.0, w in 0.0f64..4.0) {
        let m = labels.len() as f64;
        let fbar = averaged_label(&labels).unwrap();
        let lhs: f64 = labels.iter().map(|&f| w * (q - f64::from(f)).powi(2)).sum();
        let rhs = m * w * (q - fbar).powi(2) + w * labels.iter().map(|&f| (fbar - f64::from(f)).powi(2)).sum::<f64>();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn weights_in_unit_interval_and_prefix_determined(
        xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20),
        beta in 0.1f64..50.0,
        alpha in 0.1f64..4.0,
    ) {
        let gram = Gram::build(3, alpha, xs.iter().map(|x| (x.as_slice(), 1.0))).unwrap();
        let mut full = SelfNormalizedWeights::new(3, alpha, 1.0, 1.0);
        let ws: Vec<f64> = xs.iter().map(|x| full.next_weight(x, &gram, beta).0).collect();
        for w in &ws {
            prop_assert!(*w > 0.0 && *w <= 1.0);
        }
        // weights depend only on the prefix: recomputing on a truncated history agrees
        let cut = xs.len() / 2;
        let mut part = SelfNormalizedWeights::new(3, alpha, 1.0, 1.0);
        for (i, x) in xs[..cut].iter().enumerate() {
            prop_assert_eq!(part.next_weight(x, &gram, beta).0, ws[i]);
        }
    }

    #[test]
    fn weight_is_antitone_in_upsilon(u in 0.0f64..100.0, du in 0.0f64..100.0) {
        prop_assert!(weight_from_upsilon(u + du) <= weight_from_upsilon(u));
        prop_assert!(weight_from_upsilon(u) <= 1.0);
    }

    #[test]
    fn width_shrinks_with_data(xs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 1..15), probe in prop::collection::vec(-1.0f64..1.0, 2)) {
        let mut gram = Gram::ridge(2, 1.0);
        let mut last = gram.inv_norm_sq(&probe);
        for x in &xs {
            gram.add(x, 1.0);
            let now = gram.inv_norm_sq(&probe);
            prop_assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn bonus_sum_is_monotone_in_table(vals in prop::collection::vec(0.0f64..2.0, 8), bump in 0.0f64..1.0, idx in 0usize..8) {
        let table: Vec<Vec<Vec<f64>>> = vals.chunks(4).map(|h| h.chunks(2).map(<[f64]>::to_vec).collect()).collect();
        let mut bigger = table.clone();
        bigger[idx / 4][(idx / 2) % 2][idx % 2] += bump;
        for s0 in 0..2 {
            for a0 in 0..2 {
                for s1 in 0..2 {
                    for a1 in 0..2 {
                        let tau = Trajectory::new(vec![(s0, a0), (s1, a1)], 0);
                        prop_assert!(transition_bonus(&bigger, &tau) >= transition_bonus(&table, &tau));
                    }
                }
            }
        }
    }

    #[test]
    fn argmax_invariant_under_positive_scaling(vals in prop::collection::vec(-1.0f64..1.0, 1..12), scale in 0.5f64..10.0) {
        let scaled: Vec<f64> = vals.iter().map(|v| v * scale).collect();
        prop_assert_eq!(argmax_first(&vals, 0.0), argmax_first(&scaled, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn regret_log_is_consistent(seed in 0u64..1000, inst_seed in 0u64..1000, kind in prop_oneof![Just(AgentKind::RlMsip), Just(AgentKind::UnweightedOful)]) {
        let inst = random_tiny(2, 2, 2, 2, 2, inst_seed);
        let panel = FeedbackPanel::shared(DeviationSchedule::new(ScheduleKind::Uniform, 1.0), 2, 25).unwrap();
        let recs = run(&AgentConfig::new(kind), &inst, &panel, 25, seed).unwrap();
        prop_assert_eq!(recs.len(), 25);
        let mut cum = 0.0;
        for (i, r) in recs.iter().enumerate() {
            prop_assert_eq!(r.episode, i + 1);
            prop_assert!(r.instant_regret >= -1e-12 && r.instant_regret <= 1.0 + 1e-12);
            cum += r.instant_regret;
            prop_assert!((r.cum_regret - cum).abs() <= 1e-9);
            prop_assert!(r.ledger_spend <= 1.0 + 1e-12);
            prop_assert!(r.mean_w1 > 0.0 && r.mean_w1 <= 1.0);
        }
    }
}
