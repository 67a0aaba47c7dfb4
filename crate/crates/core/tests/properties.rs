use proptest::prelude::*;
use tullock_core::analysis::{detect_cycle_in, CycleOptions};
use tullock_core::dynamics::{lyapunov_decrement_bound, potential_rate, safe_step, step_discrete, Schedule};
use tullock_core::equilibrium::{closed_form_symmetric_linear, closed_form_two_agent_linear};
use tullock_core::{ContestInstance, CostFunction, CostTerm};

fn cost() -> impl Strategy<Value = CostFunction> {
    prop_oneof![
        (0.2f64..3.0).prop_map(|a| CostFunction::linear(a).unwrap()),
        (0.2f64..3.0).prop_map(|a| CostFunction::power(a, 2.0).unwrap()),
        (0.2f64..2.0, 0.1f64..1.0, 2.0f64..4.0)
            .prop_map(|(a, b, p)| CostFunction::new(vec![CostTerm::new(a, 1.0), CostTerm::new(b, p)]).unwrap()),
    ]
}

fn instance(x_min: f64) -> impl Strategy<Value = ContestInstance> {
    prop::collection::vec(cost(), 2..=5).prop_map(move |c| ContestInstance::new(c, x_min).unwrap())
}

fn with_profile(x_min: f64) -> impl Strategy<Value = (ContestInstance, Vec<f64>)> {
    instance(x_min).prop_flat_map(move |inst| {
        let n = inst.n();
        (Just(inst), prop::collection::vec(x_min.max(0.01)..2.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn best_response_maximizes_utility((inst, x) in with_profile(0.0), z in 0.0f64..5.0) {
        let p = inst.profile(x).unwrap();
        for i in 0..inst.n() {
            let s = p.s_minus(i);
            let y = inst.best_response(i, s).unwrap();
            let uy = inst.utility(i, y, s).unwrap();
            prop_assert!(uy >= inst.utility(i, z, s).unwrap() - 1e-12);
            prop_assert!(y >= inst.x_min());
        }
    }

    #[test]
    fn potential_is_nonnegative_and_aggregates((inst, x) in with_profile(0.0)) {
        let p = inst.profile(x).unwrap();
        let pot = inst.potential(&p).unwrap();
        prop_assert!(pot.per_agent.iter().all(|v| *v >= -1e-12));
        let sum: f64 = pot.per_agent.iter().sum();
        prop_assert!((sum - pot.total).abs() <= 1e-12);
        let agg = inst.potential_aggregate(&p).unwrap();
        prop_assert!((agg - pot.total).abs() <= 1e-10 * (1.0 + pot.total.abs()));
    }

    #[test]
    fn gradient_matches_finite_differences((inst, x) in with_profile(0.0)) {
        let p = inst.profile(x.clone()).unwrap();
        prop_assume!(inst.is_generic(&p));
        let g = inst.potential_gradient(&p).unwrap();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            let vu = inst.potential(&inst.profile(up).unwrap()).unwrap().total;
            let vd = inst.potential(&inst.profile(dn).unwrap()).unwrap().total;
            let fd = (vu - vd) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * (1.0 + g[k].abs()), "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn lyapunov_inequality_holds((inst, x) in with_profile(0.0)) {
        let p = inst.profile(x).unwrap();
        let bound = lyapunov_decrement_bound(&inst, &p).unwrap();
        let v = inst.potential(&p).unwrap().total;
        let rate = potential_rate(&inst, &p).unwrap();
        prop_assert!(bound <= 0.0);
        prop_assert!(rate + v <= bound + 1e-9 * (1.0 + v), "rate+V={} bound={bound}", rate + v);
    }

    #[test]
    fn safe_step_contracts((inst, x) in with_profile(0.05)) {
        let p = inst.profile(x).unwrap();
        let alpha = safe_step(&inst, &p).unwrap();
        prop_assert!(alpha > 0.0 && alpha <= 0.5);
        let v0 = inst.potential(&p).unwrap().total;
        let v1 = inst.potential(&step_discrete(&inst, &p, alpha).unwrap()).unwrap().total;
        prop_assert!(v1 <= (1.0 - alpha) * v0 + 1e-10, "v0={v0} v1={v1} alpha={alpha}");
    }

    #[test]
    fn unit_step_lands_on_best_response((inst, x) in with_profile(0.0)) {
        let p = inst.profile(x).unwrap();
        let next = step_discrete(&inst, &p, 1.0).unwrap();
        let snap = inst.snapshot(&p).unwrap();
        for (a, b) in next.as_slice().iter().zip(&snap.best_response) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn symmetric_closed_form_is_fixed_point(n in 2usize..8, a in 0.1f64..5.0) {
        let inst = ContestInstance::symmetric_linear(n, a, 0.0).unwrap();
        let x = closed_form_symmetric_linear(n, a).unwrap();
        let snap = inst.snapshot(&x).unwrap();
        for (y, xi) in snap.best_response.iter().zip(x.as_slice()) {
            prop_assert!((y - xi).abs() <= 1e-12 * (1.0 + xi));
        }
    }

    #[test]
    fn two_agent_closed_form_has_zero_marginals(beta in 1.0f64..50.0) {
        let inst = ContestInstance::linear(&[1.0, beta], 0.0).unwrap();
        let x = closed_form_two_agent_linear(beta).unwrap();
        for i in 0..2 {
            let mu = inst.marginal_utility(i, x[i], x.s_minus(i)).unwrap();
            prop_assert!(mu.abs() <= 1e-10);
        }
    }

    #[test]
    fn cycle_detector_finds_minimal_period(p in 2usize..12, n in 1usize..4, seed in 0u64..1000) {
        let base: Vec<Vec<f64>> = (0..p)
            .map(|k| (0..n).map(|i| ((seed + 7 * k as u64 + 13 * i as u64) % 101) as f64 / 101.0 + k as f64).collect())
            .collect();
        let seq: Vec<Vec<f64>> = (0..600).map(|t| base[t % p].clone()).collect();
        let refs: Vec<&[f64]> = seq.iter().map(|v| v.as_slice()).collect();
        let c = detect_cycle_in(&refs, &CycleOptions::default()).unwrap();
        prop_assert_eq!(c.period, p);
        prop_assert!(c.residual <= 1e-7);
    }

    #[test]
    fn power_schedules_vanish_with_divergent_sum(r in 0.01f64..=1.0) {
        let s = Schedule::Power(r);
        prop_assert!(s.validate().is_ok());
        prop_assert!(s.vanishes() && s.series_diverges());
        prop_assert!(s.weight(1000) < s.weight(10));
    }
}
