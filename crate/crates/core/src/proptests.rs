//! Property tests over the public API.

use std::f64::consts::PI;

use crate::analysis::{fit_power_law, gain_db, trace_from_run, TraceEntry};
use crate::estimator::{bayes_update, gaussian_prior, Estimate, Posterior};
use crate::frequentist::{fmm_sensitivity_avg, fmm_sensitivity_t, lock_step_noiseless, LockState};
use crate::physics::{
    effective_atoms, ideal_probability, FieldProfile, MeasurementOutcome, PhysicsParams,
    RamseyConfig,
};
use crate::policy::{argmax_first, PhaseSearchConfig, Schedule, UtilityEvaluator};
use crate::scenario::{ScenarioConfig, ScenarioKind};
use proptest::prelude::*;

fn outcome(p_e: f64, n: f64) -> MeasurementOutcome {
    MeasurementOutcome {
        p_e,
        n_eff: n,
        cycle_index: 0,
        wall_time: 0.0,
    }
}

fn prior(mu: f64, sigma: f64) -> Posterior {
    let est = Estimate {
        b_est: mu,
        delta_b: sigma,
    };
    gaussian_prior(&est, mu - 15.0 * sigma, mu + 15.0 * sigma, 1024).unwrap()
}

fn update_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    // (T_R, phi_c, p_e or noise draw, n)
    (
        0.2e-3..3e-3f64,
        0.0..2.0 * PI,
        0.01..0.99f64,
        200.0..11000.0f64,
    )
}

fn scenario_kind() -> impl Strategy<Value = ScenarioKind> {
    prop_oneof![
        Just(ScenarioKind::Coherence),
        Just(ScenarioKind::Frequentist),
        Just(ScenarioKind::Bayesian),
        Just(ScenarioKind::Track),
        Just(ScenarioKind::Scaling),
        Just(ScenarioKind::Compare),
    ]
}

proptest! {
    #[test]
    fn schedule_is_monotone_with_j_distinct_times(
        growth in 1.05..3.0f64,
        t_min in 0.05e-3..2e-3f64,
        ratio in 1.0..200.0f64,
        extra in 0usize..50,
    ) {
        let mut sched = Schedule { growth, t_min, t_max: t_min * ratio, iterations: 1 };
        sched.iterations = sched.ramp_len() + extra;
        let times = sched.times();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        let mut distinct = times.clone();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), sched.ramp_len());
        prop_assert_eq!(*times.last().unwrap(), sched.t_max);
        prop_assert!((times[0] - sched.first_time()).abs() <= 1e-15 * sched.t_max);
    }

    #[test]
    fn updates_stay_normalized(
        mu in -50.0..50.0f64,
        sigma in 0.05..5.0f64,
        (t, phi, p_e, n) in update_strategy(),
    ) {
        let params = PhysicsParams::default();
        let post = prior(mu, sigma);
        prop_assert!((post.integral() - 1.0).abs() < 1e-9);
        let cfg = RamseyConfig::new(t, phi, 0.0);
        if let Ok(next) = bayes_update(&post, &outcome(p_e, n), &cfg, &params) {
            prop_assert!((next.integral() - 1.0).abs() < 1e-9);
            prop_assert!(next.density().iter().all(|d| *d >= 0.0 && d.is_finite()));
        }
    }

    #[test]
    fn update_order_does_not_matter(
        mu in -20.0..20.0f64,
        sigma in 0.2..2.0f64,
        offset in -1.0..1.0f64,
        updates in prop::collection::vec(update_strategy(), 2..5),
        rotate in 1usize..4,
    ) {
        let params = PhysicsParams::default();
        // readouts consistent with one true field, so no node underflows
        let truth = mu + offset * sigma;
        let updates: Vec<_> = updates
            .into_iter()
            .map(|(t, phi, noise, n)| {
                let cfg = RamseyConfig::new(t, phi, 0.0);
                let p = ideal_probability(&params, &cfg, truth) + (noise - 0.5) * 0.02;
                (cfg, outcome(p.clamp(0.0, 1.0), n))
            })
            .collect();
        let apply = |list: &[(RamseyConfig, MeasurementOutcome)]| {
            list.iter().try_fold(prior(mu, sigma), |post, (cfg, o)| {
                bayes_update(&post, o, cfg, &params)
            })
        };
        let mut permuted = updates.clone();
        permuted.rotate_left(rotate % updates.len());
        permuted.reverse();
        let a = apply(&updates).unwrap();
        let b = apply(&permuted).unwrap();
        let max = a.density().iter().copied().fold(0.0, f64::max);
        let diff = a
            .density()
            .iter()
            .zip(b.density())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        prop_assert!(diff <= 1e-8 * max, "{diff} of {max}");
    }

    #[test]
    fn slope_readout_does_not_widen_posterior(
        mu in -20.0..20.0f64,
        frac in 0.02..0.2f64,
        t in 0.3e-3..7e-3f64,
        side in prop::bool::ANY,
    ) {
        let params = PhysicsParams::default();
        let sigma = frac * params.fringe_period(t);
        let post = prior(mu, sigma);
        // phase that puts the prior mean on a slope
        let base = -2.0 * PI * params.larmor_shift(mu) * t;
        let phi = if side { PI / 2.0 } else { 3.0 * PI / 2.0 } - base;
        let cfg = RamseyConfig::new(t, phi, 0.0);
        let n = effective_atoms(&params, t);
        let p = ideal_probability(&params, &cfg, mu);
        let next = bayes_update(&post, &outcome(p, n), &cfg, &params).unwrap();
        prop_assert!(next.moments().delta_b <= 1.05 * post.moments().delta_b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn utility_is_periodic_and_non_negative(
        mu in -40.0..40.0f64,
        frac in 0.003..0.3f64,
        i in 1usize..15,
        phi in 0.0..2.0 * PI,
    ) {
        let params = PhysicsParams::default();
        let sched = Schedule::default();
        let t = sched.interrogation_time(i).unwrap();
        let post = prior(mu, frac * params.fringe_period(t));
        let eval = UtilityEvaluator::new(
            &post,
            t,
            effective_atoms(&params, t),
            &PhaseSearchConfig::default(),
            &params,
            0.0,
        );
        let u = eval.utility(phi);
        prop_assert!(u.is_finite() && u >= -1e-9, "{u}");
        let shifted = eval.utility(phi + 2.0 * PI);
        prop_assert!((u - shifted).abs() <= 1e-12 * u.abs().max(1.0));
    }

    #[test]
    fn config_round_trips_through_toml(
        kind in scenario_kind(),
        seed in any::<u64>(),
        runs in 100usize..500,
        growth in 1.1..2.0f64,
    ) {
        let mut cfg = ScenarioConfig::for_scenario(kind);
        cfg.seed = seed;
        cfg.runs = runs;
        cfg.schedule.growth = growth;
        let text = cfg.to_toml_string().unwrap();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #[test]
    fn sensitivities_follow_their_definitions(
        deltas in prop::collection::vec(1e-4..10.0f64, 1..30),
        t in 0.1e-3..10e-3f64,
    ) {
        let params = PhysicsParams::default();
        let entries: Vec<TraceEntry> = deltas
            .iter()
            .map(|&d| TraceEntry { interrogation: t, cycles: 1, delta_b: d })
            .collect();
        let recs = trace_from_run(&entries, params.cycle_period).unwrap();
        for (k, r) in recs.iter().enumerate() {
            let n = (k + 1) as f64;
            prop_assert!((r.t_total - n * t).abs() <= 1e-12 * n * t);
            prop_assert!((r.tau - n * params.cycle_period).abs() <= 1e-12 * n);
            prop_assert!((r.eta_t - r.delta_b * r.t_total.sqrt()).abs() <= 1e-12 * r.eta_t);
            prop_assert!((r.eta_tau / r.eta_t - (r.tau / r.t_total).sqrt()).abs() < 1e-9 * r.eta_tau / r.eta_t);
        }
        let ratio = fmm_sensitivity_avg(t, &params) / fmm_sensitivity_t(t, &params);
        prop_assert!((ratio - (params.cycle_period / t).sqrt()).abs() < 1e-12 * ratio);
    }

    #[test]
    fn power_law_fit_recovers_exponent(
        exponent in -2.0..2.0f64,
        prefactor in 1e-3..1e3f64,
        x0 in 1e-4..1.0f64,
        n in 5usize..40,
    ) {
        let xs: Vec<f64> = (0..n).map(|k| x0 * 1.3f64.powi(k as i32)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| prefactor * x.powf(exponent)).collect();
        let fit = fit_power_law(&xs, &ys).unwrap();
        prop_assert!((fit.exponent - exponent).abs() < 1e-9);
        prop_assert!((fit.prefactor / prefactor - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gain_is_antisymmetric(a in 1e-3..1e3f64, b in 1e-3..1e3f64) {
        let g = gain_db(a, b).unwrap();
        prop_assert!((g + gain_db(b, a).unwrap()).abs() < 1e-9);
        prop_assert!(gain_db(a, a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn locked_servo_holds_any_field(b in -200.0..200.0f64, t in 0.2e-3..7.1e-3f64) {
        let params = PhysicsParams::default();
        let state = LockState::at_field(b, 1.0, &params).unwrap();
        let step = lock_step_noiseless(&state, t, &FieldProfile::constant(b), 0.0, &params).unwrap();
        prop_assert!(step.error_signal.abs() < 1e-9);
        prop_assert!((step.b_est - b).abs() < 1e-9 * b.abs().max(1.0));
    }

    #[test]
    fn argmax_prefers_first_of_ties(
        values in prop::collection::vec(-5.0..5.0f64, 1..40),
        dup in 0usize..40,
    ) {
        let mut v = values.clone();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = dup % v.len();
        v[d] = max;
        let k = argmax_first(&v);
        prop_assert_eq!(v[k], max);
        prop_assert!(v[..k].iter().all(|x| *x < max));
    }
}
