use proptest::prelude::*;

use urllc_core::channel::{
    blocklength_for_reliability, failure_probability, q_function, q_inverse, LinkSpec,
};
use urllc_core::dimensioning::{one_shot_staffing, single_class_capacity, OneShotLoad};
use urllc_core::exact_queue::{blocking_report, erlang_b, ExactOptions, LossClass};
use urllc_core::grid::BandwidthGrid;
use urllc_core::harq::{optimize, sweep_table, OptimizerOptions, Regime};
use urllc_core::sim::{simulate, SimConfig};
use urllc_core::traffic::{ClassPlan, SystemConfig, TrafficClass};
use urllc_core::Execution;

fn traffic(payload: u32, sinr_db: f64, deadline: f64, eps: f64, feedback: f64) -> TrafficClass {
    TrafficClass {
        name: "prop".into(),
        arrival_rate: 1.0,
        payload_bits: payload,
        sinr_linear: 10f64.powf(sinr_db / 10.0),
        deadline,
        reliability_eps: eps,
        feedback_delay: feedback,
    }
}

proptest! {
    #[test]
    fn q_inverse_undoes_q(x in -6.0f64..8.0) {
        let back = q_inverse(q_function(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()), "{x} -> {back}");
    }

    #[test]
    fn blocklength_meets_target_exactly(
        payload in 1u32..4000,
        sinr_db in -5.0f64..30.0,
        log_p in -9.0f64..-0.31,
    ) {
        let link = LinkSpec::new(10f64.powf(sinr_db / 10.0), payload).unwrap();
        let p = 10f64.powf(log_p);
        let r = blocklength_for_reliability(&link, p).unwrap();
        prop_assert!(r > 0.0);
        let back = failure_probability(r, &link).unwrap();
        prop_assert!(((back - p) / p).abs() < 1e-8, "p={p} r={r} back={back}");
        let looser = blocklength_for_reliability(&link, (p * 2.0).min(0.5)).unwrap();
        prop_assert!(looser <= r);
    }

    #[test]
    fn single_class_blocking_is_erlang(
        servers in 1u32..40,
        load in 0.01f64..30.0,
        duration in 1e-4f64..1e-1,
        spare in 0.0f64..0.99,
    ) {
        let h = 1e5;
        let w = (f64::from(servers) + spare) * h;
        let c = LossClass::new(load / duration, h, duration).unwrap();
        let b = blocking_report(&[c], w, &ExactOptions::default()).unwrap().per_class_blocking[0];
        prop_assert!((b - erlang_b(servers, load)).abs() < 1e-12);
    }

    #[test]
    fn blocking_depends_only_on_load(
        rho in proptest::collection::vec(0.05f64..3.0, 2..4),
        units in proptest::collection::vec(1u32..5, 2..4),
        stretch in 0.1f64..10.0,
        capacity in 4u32..30,
    ) {
        let n = rho.len().min(units.len());
        let base: Vec<LossClass> = (0..n)
            .map(|i| LossClass::new(rho[i], f64::from(units[i]), 1.0).unwrap())
            .collect();
        let scaled: Vec<LossClass> = (0..n)
            .map(|i| LossClass::new(rho[i] / stretch, f64::from(units[i]), stretch).unwrap())
            .collect();
        let w = f64::from(capacity);
        let a = blocking_report(&base, w, &ExactOptions::default()).unwrap();
        let b = blocking_report(&scaled, w, &ExactOptions::default()).unwrap();
        for (x, y) in a.per_class_blocking.iter().zip(&b.per_class_blocking) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            prop_assert!((0.0..=1.0).contains(x));
        }
        prop_assert!(a.normalization_error < 1e-12);
    }

    #[test]
    fn wider_classes_block_more(
        rho in 0.05f64..3.0,
        small in 1u32..4,
        extra in 1u32..4,
        capacity in 8u32..40,
    ) {
        // a class needing more bandwidth is blocked at least as often
        let classes = [
            LossClass::new(rho, f64::from(small), 1.0).unwrap(),
            LossClass::new(rho, f64::from(small + extra), 1.0).unwrap(),
        ];
        let b = blocking_report(&classes, f64::from(capacity), &ExactOptions::default()).unwrap();
        prop_assert!(b.per_class_blocking[1] >= b.per_class_blocking[0]);
    }

    #[test]
    fn grid_reproduces_commensurate_values(
        numerator in 1u32..1_000_000,
        denominator in 1u32..1000,
        counts in proptest::collection::vec(1u64..500, 1..4),
        capacity in 500u64..5000,
    ) {
        let unit = f64::from(numerator) / f64::from(denominator);
        let demands: Vec<f64> = counts.iter().map(|&k| k as f64 * unit).collect();
        let g = BandwidthGrid::new(capacity as f64 * unit, &demands).unwrap();
        prop_assert!(g.exact);
        for (d, &k) in demands.iter().zip(&g.demands) {
            prop_assert!(((k as f64 * g.unit_hz - d) / d).abs() < 1e-12);
        }
        for (i, &k) in counts.iter().enumerate() {
            prop_assert_eq!(g.max_count(i), capacity / k);
        }
    }

    #[test]
    fn grid_never_overstates_room(
        capacity in 1e3f64..1e9,
        shares in proptest::collection::vec(1e-6f64..1.0, 1..4),
    ) {
        let demands: Vec<f64> = shares.iter().map(|s| s * capacity).collect();
        let g = BandwidthGrid::new(capacity, &demands).unwrap();
        prop_assert!(g.capacity as f64 * g.unit_hz <= capacity * (1.0 + 1e-12));
        for (i, &d) in demands.iter().enumerate() {
            prop_assert!(g.demands[i] as f64 * g.unit_hz >= d * (1.0 - 1e-12));
            prop_assert!(g.max_count(i) as f64 <= (capacity / d).floor() + 1e-9);
        }
    }

    #[test]
    fn capacity_inverts_staffing(
        payload in 16u32..2000,
        sinr_db in 0.0f64..25.0,
        deadline in 2e-4f64..5e-3,
        log_eps in -8.0f64..-2.0,
        log_w in 5.0f64..10.0,
    ) {
        let c = traffic(payload, sinr_db, deadline, 10f64.powf(log_eps), 0.0);
        let w = 10f64.powf(log_w);
        let cap = single_class_capacity(w, &c, 1.0).unwrap();
        prop_assume!(cap.feasible);
        prop_assert!(cap.lambda_star >= 0.0);
        let load = OneShotLoad { arrival_rate: cap.lambda_star, blocklength: cap.blocklength, duration: deadline };
        let back = one_shot_staffing(&[load], c.reliability_eps, 1.0).unwrap();
        prop_assert!(((back.required_bandwidth - w) / w).abs() < 1e-9);
        prop_assert!(back.required_bandwidth >= back.mean_utilization);
    }

    #[test]
    fn optimizer_is_exhaustive_and_feasible(
        payload in 16u32..2000,
        sinr_db in 0.0f64..25.0,
        deadline in 5e-4f64..3e-3,
        log_eps in -8.0f64..-2.0,
        feedback_share in 0.0f64..0.4,
        mean_regime in any::<bool>(),
    ) {
        let c = traffic(payload, sinr_db, deadline, 10f64.powf(log_eps), feedback_share * deadline);
        let regime = if mean_regime { Regime::Mean } else { Regime::Variance };
        let opts = OptimizerOptions::default();
        let res = optimize(&c, regime, f64::INFINITY, 1.0, &opts).unwrap();
        let table = sweep_table(&c, regime, 1.0, f64::INFINITY, 1.0, &opts).unwrap();
        let brute = table
            .iter()
            .filter(|r| r.feasible())
            .min_by(|a, b| a.objective.unwrap().total_cmp(&b.objective.unwrap()).then(a.stages.cmp(&b.stages)))
            .unwrap();
        prop_assert_eq!(res.best_scheme.stages, brute.stages);
        let s = &res.best_scheme;
        res.best_scheme.validate_for(&c, 1.0).unwrap();
        prop_assert!(s.stage_failure_prob.powi(s.stages as i32) <= c.reliability_eps * (1.0 + 1e-9));
        prop_assert!((f64::from(s.stages) * (s.duration + c.feedback_delay) - deadline).abs() < 1e-12);
        prop_assert!(res.objective.value >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_accounts_for_every_packet(
        rates in proptest::collection::vec(100.0f64..5000.0, 1..4),
        stages in proptest::collection::vec(1u32..4, 1..4),
        room in 0.5f64..3.0,
        seed in any::<u64>(),
    ) {
        let n = rates.len().min(stages.len());
        let classes: Vec<ClassPlan> = (0..n)
            .map(|i| {
                let mut c = traffic(256, 0.0, 1e-3, 1e-5, 0.1e-3);
                c.name = format!("c{i}");
                c.arrival_rate = rates[i];
                let scheme = urllc_core::harq::HarqScheme::homogeneous(&c, stages[i], 1.0).unwrap();
                ClassPlan { class: c, scheme }
            })
            .collect();
        let widest = classes.iter().map(|p| p.scheme.stage_bandwidth).fold(0.0, f64::max);
        let total: f64 = classes.iter().map(|p| p.scheme.stage_bandwidth).sum();
        let bandwidth = widest.max(room * total);
        let cfg = SimConfig {
            system: SystemConfig { bandwidth, channel_use_density: 1.0, classes },
            horizon: 0.2,
            warmup: 0.01,
            seed,
            replications: 2,
            trace: false,
            exec: Execution::Sequential,
        };
        let rep = simulate(&cfg).unwrap().report;
        prop_assert!(rep.peak_occupancy <= bandwidth);
        for c in &rep.classes {
            prop_assert!(c.counts.is_conserved(), "{:?}", c.counts);
            prop_assert!((0.0..=1.0).contains(&c.blocking_rate.mean));
        }
    }
}
