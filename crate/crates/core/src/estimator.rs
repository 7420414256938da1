//! Grid-discretized Bayesian posterior over the field `B`.
//!
//! A [`Posterior`] carries two ranges: the *interval* `[b_lo, b_hi]` that the
//! adaptive protocol assigns (one fringe period of the current interrogation
//! time) and the *support window* actually covered by the uniform grid. The
//! window is the interval clipped to `μ ± 12σ` of the distribution being
//! represented, so the grid keeps its resolution as the posterior narrows
//! from hundreds of nT to a few pT. Outside the window the density is zero.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::physics::{ideal_probability, MeasurementOutcome, PhysicsParams, RamseyConfig};

/// Half-width of the support window in units of the represented standard deviation.
pub const SUPPORT_SIGMAS: f64 = 12.0;

pub const DEFAULT_POINTS: usize = 2048;

pub const MIN_POINTS: usize = 16;

/// How the posterior is carried into a re-centred interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorReset {
    /// Keep the raw posterior, restricted to the new interval.
    #[default]
    Inherit,
    /// Replace the posterior by a Gaussian with its mean and standard deviation.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Posterior mean, nT.
    pub b_est: f64,
    /// Posterior standard deviation, nT.
    pub delta_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    b_lo: f64,
    b_hi: f64,
    grid_lo: f64,
    spacing: f64,
    density: Vec<f64>,
}

impl Posterior {
    /// Builds a posterior from an unnormalized log-density sampled on
    /// `n_points` uniform nodes over `window ⊆ [b_lo, b_hi]`.
    fn from_log_fn(
        interval: (f64, f64),
        window: (f64, f64),
        n_points: usize,
        log_f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        check_points(n_points)?;
        let (w_lo, w_hi) = window;
        ensure(
            w_hi > w_lo,
            "window",
            format!("empty support [{w_lo}, {w_hi}]"),
        )?;
        let spacing = (w_hi - w_lo) / (n_points - 1) as f64;
        let log_density: Vec<f64> = (0..n_points)
            .map(|k| log_f(w_lo + k as f64 * spacing))
            .collect();
        Self::from_log_density(interval, w_lo, spacing, log_density)
    }

    fn from_log_density(
        interval: (f64, f64),
        grid_lo: f64,
        spacing: f64,
        log_density: Vec<f64>,
    ) -> Result<Self> {
        let max = log_density
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegeneratePosterior(
                "density vanishes on every grid node".into(),
            ));
        }
        let density: Vec<f64> = log_density.iter().map(|&l| (l - max).exp()).collect();
        let live = density.iter().filter(|&&d| d > 1e-12).count();
        if live < 3 {
            return Err(Error::DegeneratePosterior(format!(
                "mass collapsed onto {live} grid node(s)"
            )));
        }
        let mut post = Self {
            b_lo: interval.0,
            b_hi: interval.1,
            grid_lo,
            spacing,
            density,
        };
        let z = post.integral();
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::DegeneratePosterior(format!("normalization {z}")));
        }
        post.density.iter_mut().for_each(|d| *d /= z);
        Ok(post)
    }

    /// The protocol interval `[b_lo, b_hi]`, nT.
    pub fn interval(&self) -> (f64, f64) {
        (self.b_lo, self.b_hi)
    }

    /// Range covered by grid nodes, nT.
    pub fn support(&self) -> (f64, f64) {
        (self.grid_lo, self.node(self.density.len() - 1))
    }

    pub fn n_points(&self) -> usize {
        self.density.len()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node(&self, k: usize) -> f64 {
        self.grid_lo + k as f64 * self.spacing
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `(B, density)` pairs in increasing `B`.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.density
            .iter()
            .enumerate()
            .map(|(k, &d)| (self.node(k), d))
    }

    /// Trapezoid weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 || k + 1 == self.density.len() {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    pub fn integral(&self) -> f64 {
        (0..self.density.len())
            .map(|k| self.weight(k) * self.density[k])
            .sum()
    }

    /// Linear interpolation of the grid density; zero outside the support.
    pub fn density_at(&self, b: f64) -> f64 {
        let (lo, hi) = self.support();
        if b < lo || b > hi {
            return 0.0;
        }
        let x = (b - self.grid_lo) / self.spacing;
        let k = (x.floor() as usize).min(self.density.len() - 2);
        let t = x - k as f64;
        self.density[k] * (1.0 - t) + self.density[k + 1] * t
    }

    pub fn moments(&self) -> Estimate {
        moments(self)
    }
}

fn check_points(n_points: usize) -> Result<()> {
    ensure(
        n_points >= MIN_POINTS,
        "n_points",
        format!("need at least {MIN_POINTS}, got {n_points}"),
    )
}

fn window_for(interval: (f64, f64), mu: f64, sigma: f64) -> (f64, f64) {
    let reach = SUPPORT_SIGMAS * sigma;
    (interval.0.max(mu - reach), interval.1.min(mu + reach))
}

/// Uniform prior of width `1/(|Δm_F γ| T_1)` centred on `center`.
pub fn uniform_prior(
    center: f64,
    t_1: f64,
    params: &PhysicsParams,
    n_points: usize,
) -> Result<Posterior> {
    ensure(t_1 > 0.0, "t_1", "must be > 0")?;
    let half = params.dynamic_range(t_1);
    let interval = (center - half, center + half);
    Posterior::from_log_fn(interval, interval, n_points, |_| 0.0)
}

/// Gaussian `N(est.b_est, est.delta_b²)` truncated to `[b_lo, b_hi]` and renormalized.
pub fn gaussian_prior(est: &Estimate, b_lo: f64, b_hi: f64, n_points: usize) -> Result<Posterior> {
    if !(b_lo < est.b_est && est.b_est < b_hi) {
        return Err(Error::Recentre {
            b_est: est.b_est,
            b_lo,
            b_hi,
        });
    }
    ensure(est.delta_b > 0.0, "delta_b", "must be > 0")?;
    let (mu, sigma) = (est.b_est, est.delta_b);
    let window = window_for((b_lo, b_hi), mu, sigma);
    Posterior::from_log_fn((b_lo, b_hi), window, n_points, |b| {
        let z = (b - mu) / sigma;
        -0.5 * z * z
    })
}

/// Variance regularization: `p̃ = clamp(p_e, ε, 1 − ε)` with `ε = 1/(2 n_eff)`.
pub fn likelihood_variance(p_e: f64, n_eff: f64) -> f64 {
    let eps = 0.5 / n_eff;
    let p = p_e.clamp(eps, 1.0 - eps);
    p * (1.0 - p) / n_eff
}

/// Log of the Gaussian likelihood of observing `p_e` when the model predicts `model_p`.
pub fn log_likelihood(p_e: f64, model_p: f64, n_eff: f64) -> f64 {
    let var = likelihood_variance(p_e, n_eff);
    let d = p_e - model_p;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

/// Gaussian likelihood of `p_e` given field `b`, with mean given by the ideal
/// fringe and variance `p̃(1 − p̃)/n_eff`.
pub fn likelihood(p_e: f64, b: f64, cfg: &RamseyConfig, n_eff: f64, params: &PhysicsParams) -> f64 {
    log_likelihood(p_e, ideal_probability(params, cfg, b), n_eff).exp()
}

/// Pointwise prior × likelihood on the prior's grid, renormalized. Products are
/// accumulated in the log domain.
pub fn bayes_update(
    prior: &Posterior,
    outcome: &MeasurementOutcome,
    cfg: &RamseyConfig,
    params: &PhysicsParams,
) -> Result<Posterior> {
    let log_density = prior
        .points()
        .map(|(b, d)| {
            if d > 0.0 {
                d.ln()
                    + log_likelihood(
                        outcome.p_e,
                        ideal_probability(params, cfg, b),
                        outcome.n_eff,
                    )
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Posterior::from_log_density(prior.interval(), prior.grid_lo, prior.spacing, log_density)
}

/// Trapezoid-rule mean and standard deviation.
pub fn moments(post: &Posterior) -> Estimate {
    let n = post.n_points();
    let mean: f64 = (0..n)
        .map(|k| post.weight(k) * post.density[k] * post.node(k))
        .sum();
    let var: f64 = (0..n)
        .map(|k| {
            let d = post.node(k) - mean;
            post.weight(k) * post.density[k] * d * d
        })
        .sum();
    Estimate {
        b_est: mean,
        delta_b: var.max(0.0).sqrt(),
    }
}

/// Interval `[b_est ± 1/(2|Δm_F γ| T_i)]`.
pub fn recentred_interval(est: &Estimate, t_i: f64, params: &PhysicsParams) -> (f64, f64) {
    let half = params.dynamic_range(t_i);
    (est.b_est - half, est.b_est + half)
}

/// Moves the posterior onto the interval of width `1/(|Δm_F γ| T_i)` centred on
/// `est.b_est`, resetting it to a Gaussian (`PriorReset::Gaussian`) or keeping
/// the raw posterior restricted to the new interval (`PriorReset::Inherit`).
/// An inherited posterior with no mass left in the new interval falls back to
/// the Gaussian reset.
pub fn recentre(
    post: &Posterior,
    est: &Estimate,
    t_i: f64,
    params: &PhysicsParams,
    n_points: usize,
    mode: PriorReset,
) -> Result<Posterior> {
    ensure(t_i > 0.0, "t_i", "must be > 0")?;
    let interval = recentred_interval(est, t_i, params);
    match mode {
        PriorReset::Gaussian => gaussian_prior(est, interval.0, interval.1, n_points),
        PriorReset::Inherit => inherit(post, est, interval, n_points)
            .or_else(|_| gaussian_prior(est, interval.0, interval.1, n_points)),
    }
}

fn inherit(
    post: &Posterior,
    est: &Estimate,
    interval: (f64, f64),
    n_points: usize,
) -> Result<Posterior> {
    let (s_lo, s_hi) = post.support();
    let (w_lo, w_hi) = window_for(interval, est.b_est, est.delta_b);
    let window = (w_lo.max(s_lo), w_hi.min(s_hi));
    Posterior::from_log_fn(interval, window, n_points, |b| {
        let d = post.density_at(b);
        if d > 0.0 {
            d.ln()
        } else {
            f64::NEG_INFINITY
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> PhysicsParams {
        PhysicsParams::default()
    }

    fn outcome(p_e: f64, n_eff: f64) -> MeasurementOutcome {
        MeasurementOutcome {
            p_e,
            n_eff,
            cycle_index: 0,
            wall_time: 0.0,
        }
    }

    fn gaussian(mu: f64, sigma: f64, half: f64) -> Posterior {
        gaussian_prior(
            &Estimate {
                b_est: mu,
                delta_b: sigma,
            },
            mu - half,
            mu + half,
            DEFAULT_POINTS,
        )
        .unwrap()
    }

    #[test]
    fn uniform_prior_width_matches_first_interrogation() {
        let p = uniform_prior(0.0, 0.245e-3, &params(), DEFAULT_POINTS).unwrap();
        let (lo, hi) = p.interval();
        assert_relative_eq!(hi - lo, 291.545_189_504_373_2, max_relative = 1e-12);
        assert_relative_eq!(hi, 145.772_594_752_186_6, max_relative = 1e-12);
        assert_relative_eq!(p.density()[7], 14.0 * 0.245e-3, max_relative = 1e-12);
        assert_relative_eq!(p.integral(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_moments() {
        let params = params();
        // width 2 nT → T_1 = 1/(14·2)
        let p = uniform_prior(0.0, 1.0 / 28.0, &params, DEFAULT_POINTS).unwrap();
        let e = p.moments();
        assert!(e.b_est.abs() < 1e-12);
        assert!(
            (e.delta_b - 1.0 / 3f64.sqrt()).abs() < 1e-6,
            "{}",
            e.delta_b
        );
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(uniform_prior(0.0, 1e-3, &params(), 8).is_err());
    }

    #[test]
    fn wide_gaussian_is_nearly_uniform() {
        let p = gaussian(0.0, 1e4, 0.5);
        let worst = p
            .density()
            .iter()
            .map(|d| (d - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
        assert_relative_eq!(p.integral(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn narrow_gaussian_moments() {
        let p = gaussian(3.0, 0.5, 50.0);
        let e = p.moments();
        assert!((e.b_est - 3.0).abs() < 3e-3);
        assert!((e.delta_b / 0.5 - 1.0).abs() < 1e-3);
        assert_relative_eq!(p.integral(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_outside_interval_is_recentre_error() {
        let est = Estimate {
            b_est: 5.0,
            delta_b: 1.0,
        };
        assert!(matches!(
            gaussian_prior(&est, 0.0, 4.0, 64),
            Err(Error::Recentre { .. })
        ));
    }

    #[test]
    fn likelihood_peak_and_width() {
        let params = params();
        let cfg = RamseyConfig::new(7.1e-3, 0.3, 0.0);
        let b = 1.234;
        let p_model = ideal_probability(&params, &cfg, b);
        let sigma = likelihood_variance(p_model, 3924.0).sqrt();
        let l = likelihood(p_model, b, &cfg, 3924.0, &params);
        assert_relative_eq!(l, 1.0 / ((2.0 * PI).sqrt() * sigma), max_relative = 1e-12);
        assert_relative_eq!(
            likelihood_variance(0.5, 3924.0).sqrt(),
            7.981_885_710_176_263e-3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn likelihood_rails_are_regularized() {
        let v0 = likelihood_variance(0.0, 100.0);
        let v1 = likelihood_variance(1.0, 100.0);
        assert!(v0 > 0.0 && (v0 - v1).abs() < 1e-18);
        assert!(log_likelihood(0.0, 0.0, 100.0).is_finite());
    }

    #[test]
    fn likelihood_is_fringe_periodic() {
        let params = params();
        let cfg = RamseyConfig::new(2e-3, 1.1, 30.0);
        let period = params.fringe_period(cfg.t_r);
        for k in 0..50 {
            let b = -20.0 + k as f64 * 0.77;
            let a = likelihood(0.4, b, &cfg, 5000.0, &params);
            let c = likelihood(0.4, b + period, &cfg, 5000.0, &params);
            assert!((a - c).abs() <= 1e-9 * a.max(1e-300), "{a} {c}");
        }
    }

    #[test]
    fn flat_likelihood_leaves_prior_unchanged() {
        let params = params();
        let prior = gaussian(1.0, 0.7, 10.0);
        let cfg = RamseyConfig::new(1e-16, 0.4, 0.0);
        let post = bayes_update(&prior, &outcome(0.3, 4000.0), &cfg, &params).unwrap();
        let worst = prior
            .density()
            .iter()
            .zip(post.density())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn uniform_prior_update_is_proportional_to_likelihood() {
        let params = params();
        let t1 = 0.245e-3;
        let prior = uniform_prior(0.0, t1, &params, DEFAULT_POINTS).unwrap();
        let cfg = RamseyConfig::new(t1, 0.7, 0.0);
        let post = bayes_update(&prior, &outcome(0.42, 10_700.0), &cfg, &params).unwrap();
        let ratios: Vec<f64> = post
            .points()
            .filter(|&(_, d)| d > 1e-3)
            .map(|(b, d)| d / likelihood(0.42, b, &cfg, 10_700.0, &params))
            .collect();
        let r0 = ratios[0];
        assert!(ratios.iter().all(|r| (r / r0 - 1.0).abs() < 1e-10));
    }

    #[test]
    fn impossible_outcome_is_degenerate() {
        let params = params();
        let prior = gaussian(0.0, 1e-3, 1.0);
        let cfg = RamseyConfig::new(7.1e-3, 0.0, 0.0);
        // model predicts p ≈ 0 near B = 0; observing p = 1 with huge n underflows nowhere
        // in log space but collapses onto the edge node.
        let res = bayes_update(&prior, &outcome(1.0, 1e12), &cfg, &params);
        assert!(matches!(res, Err(Error::DegeneratePosterior(_))));
    }

    #[test]
    fn symmetric_two_peak_mean_is_midpoint() {
        let params = params();
        let t = 1e-3;
        let prior = uniform_prior(0.0, t, &params, 4097).unwrap();
        // p_e symmetric about the fringe minimum at B = 0 with φ_c = 0
        let cfg = RamseyConfig::new(t, 0.0, 0.0);
        let post = bayes_update(&prior, &outcome(0.5, 5000.0), &cfg, &params).unwrap();
        assert!(post.moments().b_est.abs() < 1e-9);
    }

    #[test]
    fn recentre_width_follows_interrogation_time() {
        let params = params();
        let prior = gaussian(0.0, 100.0, 200.0);
        let est = Estimate {
            b_est: 1.0,
            delta_b: 100.0,
        };
        let a = recentre(&prior, &est, 1e-3, &params, 512, PriorReset::Gaussian).unwrap();
        let b = recentre(&prior, &est, 2e-3, &params, 512, PriorReset::Gaussian).unwrap();
        let w = |p: &Posterior| p.interval().1 - p.interval().0;
        assert_relative_eq!(w(&a), 2.0 * w(&b), max_relative = 1e-12);
        let a2 = recentre(&a, &est, 1e-3, &params, 512, PriorReset::Gaussian).unwrap();
        assert_eq!(a.interval(), a2.interval());

        let tmax = recentred_interval(&est, 7.1e-3, &params);
        assert_relative_eq!(
            tmax.1 - est.b_est,
            5.030_181_086_519_115,
            max_relative = 1e-12
        );
    }

    #[test]
    fn inherit_keeps_posterior_shape() {
        let params = params();
        let prior = gaussian(2.0, 0.05, 5.0);
        let est = prior.moments();
        let moved = recentre(
            &prior,
            &est,
            7.1e-3,
            &params,
            DEFAULT_POINTS,
            PriorReset::Inherit,
        )
        .unwrap();
        let e2 = moved.moments();
        assert!((e2.b_est - est.b_est).abs() < 1e-6);
        assert!((e2.delta_b / est.delta_b - 1.0).abs() < 1e-4);
        assert_relative_eq!(moved.integral(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn support_window_tracks_sigma() {
        let p = gaussian(0.0, 1e-3, 5.0);
        let (lo, hi) = p.support();
        assert_relative_eq!(hi - lo, 24e-3, max_relative = 1e-9);
        assert_eq!(p.interval(), (-5.0, 5.0));
    }
}
