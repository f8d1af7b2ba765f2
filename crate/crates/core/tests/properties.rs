mod common;

use esor_core::bounds::{gamma, p_sum, p_value};
use esor_core::harness::{
    build_scenario, compute_metrics, run_scenario, Scenario, ScenarioConfig, TrajectoryLog,
};
use esor_core::numerics::solve_qp;
use esor_core::plants::DisturbanceSignal;
use esor_core::safety::{filter_control, AffineConstraint, FilterProblem, InputBox, QpStatus};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `P(Bin(n, q) ≤ r)` by direct summation.
fn binomial_cdf(n: usize, q: f64, r: usize) -> f64 {
    let mut total = 0.0;
    let mut choose = 1.0;
    for i in 0..=r.min(n) {
        if i > 0 {
            choose *= (n - i + 1) as f64 / i as f64;
        }
        total += choose * q.powi(i as i32) * (1.0 - q).powi((n - i) as i32);
    }
    total
}

thread_local! {
    static SCENARIOS: [Scenario; 2] = [
        build_scenario(&ScenarioConfig::acc_default()).unwrap(),
        build_scenario(&ScenarioConfig::segway_default()).unwrap(),
    ];
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn p_value_is_a_binomial_tail(k in 1usize..200, r in 0usize..5, pole in 0.0f64..0.99) {
        let got = p_value(k, r, pole).unwrap();
        let want = binomial_cdf(k - 1, 1.0 - pole, r);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300, "{got} vs {want}");
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn p_sum_dominates_partial_sums_and_is_monotone(r in 0usize..5, pole in 0.0f64..0.95) {
        let s = p_sum(r, pole, 1e-12).unwrap();
        let direct: f64 = (1..5000).map(|k| binomial_cdf(k - 1, 1.0 - pole, r)).sum();
        prop_assert!((s - direct).abs() <= 1e-9 * direct, "{s} vs {direct}");
        prop_assert!(p_sum(r + 1, pole, 1e-12).unwrap() >= s);
        prop_assert!(p_sum(r, (pole + 0.01).min(0.99), 1e-12).unwrap() >= s);
    }

    #[test]
    fn gamma_is_linear_in_the_rate_bound(r in 0usize..4, pole in 0.0f64..0.999, l in 0.0f64..100.0) {
        let one = gamma(r, pole, 1e-4, 1.0).unwrap();
        let scaled = gamma(r, pole, 1e-4, l).unwrap();
        prop_assert!((scaled - l * one).abs() <= 4.0 * f64::EPSILON * scaled.abs());
    }

    #[test]
    fn qp_solver_matches_active_set_enumeration(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_qp(&mut rng);
        let sol = solve_qp(&p).unwrap();
        let best = common::enumerate_active_sets(&p).unwrap();
        prop_assert!((sol.objective - p.objective(&best)).abs() <= 1e-9 * (1.0 + p.objective(&best).abs()));
        prop_assert!(p.max_violation(&sol.point) <= 1e-9);
    }

    #[test]
    fn filter_is_minimally_invasive(
        nominal in -50.0f64..50.0,
        rows in prop::collection::vec((-10.0f64..10.0, -2.0f64..2.0), 1..4),
        limit in 1.0f64..100.0,
    ) {
        let barriers: Vec<AffineConstraint> =
            rows.iter().map(|&(constant, slope)| AffineConstraint { constant, slope }).collect();
        let input_box = InputBox::symmetric(limit);
        let p = FilterProblem { nominal, weight: 1.0, barriers: &barriers, clf: None, input_box: Some(input_box) };
        let out = filter_control(&p).unwrap();
        prop_assert!(out.u >= -limit - 1e-9 && out.u <= limit + 1e-9);

        // independent oracle: the admissible set is an interval
        let (mut lo, mut hi) = (-limit, limit);
        for b in &barriers {
            if b.slope > 0.0 {
                lo = lo.max(-b.constant / b.slope);
            } else if b.slope < 0.0 {
                hi = hi.min(-b.constant / b.slope);
            } else if b.constant < 0.0 {
                lo = f64::INFINITY;
            }
        }
        if lo <= hi - 1e-9 {
            prop_assert_eq!(out.status, QpStatus::Optimal);
            let want = nominal.clamp(lo, hi);
            prop_assert!((out.u - want).abs() <= 1e-7 * (1.0 + want.abs()), "{} vs {}", out.u, want);
            // a second pass from the filtered input changes nothing
            let again = filter_control(&FilterProblem { nominal: out.u, ..p.clone() }).unwrap();
            prop_assert!((again.u - out.u).abs() <= 1e-7 * (1.0 + out.u.abs()));
        } else if lo > hi + 1e-6 {
            prop_assert_eq!(out.status, QpStatus::Infeasible);
        }
    }

    #[test]
    fn disturbance_bounds_hold(amplitude in -5.0f64..5.0, period in 0.5f64..20.0, phase in -3.2f64..3.2, t in 0.0f64..100.0) {
        let s = DisturbanceSignal::Sinusoid { amplitude, period, phase };
        prop_assert!(s.value(t).abs() <= s.magnitude_bound() + 1e-12);
        prop_assert!(s.rate(t).abs() <= s.rate_bound() + 1e-12);
    }

    #[test]
    fn barrier_gradients_match_finite_differences(
        v in 0.0f64..40.0, gap in 0.0f64..200.0,
        p in -3.0f64..5.0, phi in -0.6f64..0.6, w in -3.0f64..3.0, om in -1.5f64..1.5,
    ) {
        SCENARIOS.with(|scenarios| {
            for (s, x) in scenarios.iter().zip([vec![v, gap], vec![p, phi, w, om]]) {
                for spec in [&s.barrier, &s.constraint] {
                    let g = spec.h_x(&x);
                    for j in 0..x.len() {
                        let e = 1e-6 * (1.0 + x[j].abs());
                        let (mut xp, mut xm) = (x.clone(), x.clone());
                        xp[j] += e;
                        xm[j] -= e;
                        let fd = (spec.h(&xp) - spec.h(&xm)) / (2.0 * e);
                        prop_assert!((fd - g[j]).abs() <= 1e-5 * (1.0 + g[j].abs()), "{} coordinate {j}: {fd} vs {}", spec.name, g[j]);
                    }
                }
            }
            Ok(())
        })?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn short_runs_roundtrip_through_csv(bandwidth in 5.0f64..60.0, segway in any::<bool>()) {
        let mut cfg = if segway { ScenarioConfig::segway_default() } else { ScenarioConfig::acc_default() };
        cfg.simulation.horizon = Some(0.05);
        cfg.observer.bandwidth = bandwidth;
        let log = run_scenario(&cfg).unwrap();
        let back = TrajectoryLog::read_csv(log.to_csv_string().unwrap().as_bytes()).unwrap();
        prop_assert_eq!(&back, &log);
        let (a, b) = (compute_metrics(&log, 0.0), compute_metrics(&back, 0.0));
        prop_assert_eq!(a.min_h.to_bits(), b.min_h.to_bits());
    }
}
