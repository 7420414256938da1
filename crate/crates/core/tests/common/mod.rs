//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use cptmag::estimator::{bayes_update, gaussian_prior, uniform_prior, Estimate, Posterior};
use cptmag::physics::{
    effective_atoms, ideal_probability, MeasurementOutcome, PhysicsParams, RamseyConfig,
};
use cptmag::policy::planning_variance;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Log of the readout likelihood written out from scratch.
pub fn log_likelihood(p_e: f64, model: f64, n: f64) -> f64 {
    let eps = 0.5 / n;
    let q = p_e.max(eps).min(1.0 - eps);
    let var = q * (1.0 - q) / n;
    -0.5 * (2.0 * PI * var).ln() - (p_e - model).powi(2) / (2.0 * var)
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// Posterior density at `nodes` from the analytic truncated Gaussian prior
/// times the product of likelihoods, normalized on a grid `refine` times
/// finer spanning `[lo, hi]`.
pub fn product_posterior(
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    updates: &[(MeasurementOutcome, RamseyConfig)],
    params: &PhysicsParams,
    nodes: &[f64],
    refine: usize,
) -> Vec<f64> {
    let log_f = |b: f64| {
        let mut l = -0.5 * ((b - mu) / sigma).powi(2);
        for (o, cfg) in updates {
            l += log_likelihood(o.p_e, ideal_probability(params, cfg, b), o.n_eff);
        }
        l
    };
    let fine_n = (nodes.len() - 1) * refine + 1;
    let h = (hi - lo) / (fine_n - 1) as f64;
    let logs: Vec<f64> = (0..fine_n).map(|k| log_f(lo + k as f64 * h)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vals: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z = trapezoid(&vals, h);
    nodes.iter().map(|&b| (log_f(b) - max).exp() / z).collect()
}

/// Mutual information between field and discretized readout with `10×` the
/// evaluator's field nodes, sampled from the interpolated prior without
/// thinning or weight floor, and `10×` its outcome density.
pub fn reference_utility(
    prior: &Posterior,
    retained: usize,
    outcome_nodes: usize,
    t_i: f64,
    n_i: f64,
    phi_c: f64,
    params: &PhysicsParams,
) -> f64 {
    let (lo, hi) = prior.support();
    let nb = 10 * retained;
    let hb = (hi - lo) / (nb - 1) as f64;
    let mut w: Vec<f64> = (0..nb)
        .map(|k| {
            let end = if k == 0 || k == nb - 1 { 0.5 } else { 1.0 };
            end * hb * prior.density_at(lo + k as f64 * hb)
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);

    // beyond 15 noise widths the outcome weight is below e^-112
    let reach = 15.0 * planning_variance(n_i).sqrt();
    let h = 1.0 / (10 * outcome_nodes) as f64;
    let pad = (reach / h).ceil() as i64;
    let p: Vec<f64> = (-pad..10 * outcome_nodes as i64 + pad)
        .map(|j| (j as f64 + 0.5) * h)
        .collect();
    let nu = p.len();
    let inv_two_var = 0.5 / planning_variance(n_i);
    let mut z = vec![0.0; nu];
    let mut row = vec![0.0; nu];
    let mut cond = 0.0;
    for k in 0..nb {
        if w[k] == 0.0 {
            continue;
        }
        let b = lo + k as f64 * hb;
        let m = 0.5 * (1.0 - (-2.0 * PI * params.larmor_shift(b) * t_i + phi_c).cos());
        let a = p.partition_point(|&x| x < m - reach);
        let e = p.partition_point(|&x| x <= m + reach).max(a + 1).min(nu);
        let a = a.min(e - 1);
        let mut best = f64::INFINITY;
        for j in a..e {
            row[j] = (p[j] - m).powi(2) * inv_two_var;
            best = best.min(row[j]);
        }
        let mut sum = 0.0;
        for x in &mut row[a..e] {
            *x = (best - *x).exp();
            sum += *x;
        }
        for j in a..e {
            let q = row[j] / sum;
            if q > 0.0 {
                z[j] += w[k] * q;
                cond += w[k] * q * q.ln();
            }
        }
    }
    let marginal: f64 = z.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum();
    cond - marginal
}

/// A prior of the kind met by the controller at interrogation time `t_i`: a
/// Gaussian on the interval of width one fringe period, or the bimodal
/// posterior left by one readout on a uniform prior over that interval.
pub fn random_prior(rng: &mut ChaCha8Rng, t_i: f64, params: &PhysicsParams) -> Posterior {
    let half = params.dynamic_range(t_i);
    let center = rng.random_range(-50.0..50.0);
    if rng.random_bool(0.3) {
        let prior = uniform_prior(center, t_i, params, 2048).unwrap();
        let outcome = MeasurementOutcome {
            p_e: rng.random_range(0.05..0.95),
            n_eff: effective_atoms(params, t_i),
            cycle_index: 0,
            wall_time: 0.0,
        };
        let cfg = RamseyConfig::new(t_i, rng.random_range(0.0..2.0 * PI), 0.0);
        return bayes_update(&prior, &outcome, &cfg, params).unwrap();
    }
    let sigma = 2.0 * half * 10f64.powf(rng.random_range(-2.5..-0.7));
    let est = Estimate {
        b_est: center + rng.random_range(-0.2..0.2) * half,
        delta_b: sigma,
    };
    gaussian_prior(&est, center - half, center + half, 2048).unwrap()
}
