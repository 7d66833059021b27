use convergent_ac::actors::Projection;
use convergent_ac::critics::{normalize_trace, Critic, CriticConfig, CriticKind};
use convergent_ac::envs::{make_random_mdp, StreamGenerator};
use convergent_ac::linalg::norm2;
use convergent_ac::mdp::{exact_value_function, ActionProbabilities, LinearFeatureMap, ParametricPolicy};
use convergent_ac::oracle::{td_fixed_point, ProjectionWeights, TraceKind};
use convergent_ac::schedule::StepSchedule;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tabular_fixed_point_is_the_value_function(seed in 0u64..500, lambda in 0.0f64..=1.0, emphatic: bool) {
        let inst = make_random_mdp(seed, 5, 3, 3).unwrap();
        let w = ProjectionWeights::from_behavior(&inst.mdp, &inst.behavior).unwrap();
        let kind = if emphatic { TraceKind::Emphatic } else { TraceKind::Standard };
        let fp = td_fixed_point(&inst.mdp, &LinearFeatureMap::tabular(5), &inst.target, &w, lambda, kind).unwrap();
        let v = exact_value_function(&inst.mdp, &inst.target).unwrap();
        for (a, b) in fp.theta.iter().zip(v.iter()) {
            prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn critic_is_linear_in_rewards(seed in 0u64..200, c in -5.0f64..5.0, lambda in 0.0f64..=1.0, kind_ix in 0usize..2) {
        let kind = [CriticKind::Gtd, CriticKind::Emphatic][kind_ix];
        let inst = make_random_mdp(seed, 4, 2, 2).unwrap();
        let scaled = inst.mdp.scale_rewards(c).unwrap();
        let cfg = CriticConfig::new(inst.mdp.discount(), lambda).unwrap();
        let (mut a, mut b) = (Critic::new(kind, 2, cfg), Critic::new(kind, 2, cfg));
        let mut s1 = StreamGenerator::new(&inst.mdp, &inst.behavior, seed).unwrap();
        let mut s2 = StreamGenerator::new(&scaled, &inst.behavior, seed).unwrap();
        for _ in 0..500 {
            let x = s1.next_transition(&inst.target, &inst.features);
            let y = s2.next_transition(&inst.target, &inst.features);
            a.step(&x, 0.01, 0.01).unwrap();
            b.step(&y, 0.01, 0.01).unwrap();
        }
        for (x, y) in a.theta().iter().zip(b.theta()) {
            prop_assert!((c * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn normalized_traces_have_unit_norm(e in prop::collection::vec(-1e3f64..1e3, 1..8)) {
        let n = normalize_trace(&e);
        if norm2(&e) > 1e-6 {
            prop_assert!((norm2(&n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn policies_are_distributions_with_consistent_scores(
        params in prop::collection::vec(-4.0f64..4.0, 6),
        s in 0usize..2,
        a in 0usize..3,
    ) {
        let pi = ParametricPolicy::tabular(2, 3, params.clone()).unwrap();
        let total: f64 = (0..3).map(|b| pi.prob(s, b)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let score = pi.score(s, a);
        let eps = 1e-6;
        for k in 0..6 {
            let mut up = params.clone();
            up[k] += eps;
            let mut down = params.clone();
            down[k] -= eps;
            let fd = (pi.with_params(up).unwrap().log_prob(s, a) - pi.with_params(down).unwrap().log_prob(s, a)) / (2.0 * eps);
            prop_assert!((fd - score[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn projection_bounds_parameters(mut w in prop::collection::vec(-1e6f64..1e6, 1..10), bound in 1.0f64..1e4) {
        Projection { w_max: bound }.apply(&mut w);
        prop_assert!(w.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn decaying_schedules_are_non_increasing(initial in 1e-4f64..1.0, kappa in 0.51f64..=1.0, t in 0u64..1_000_000) {
        let s = StepSchedule::Decaying { initial, tau: 1e4, kappa };
        prop_assert!(s.at(t + 1) <= s.at(t));
        prop_assert!(s.at(t) <= initial);
    }
}
