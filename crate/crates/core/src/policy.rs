//! Adaptive controller: exponentially growing interrogation times and the
//! auxiliary phase that maximizes the expected Shannon-information gain.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::estimator::{likelihood_variance, Posterior};
use crate::physics::PhysicsParams;

/// Interrogation-time schedule `T_i = T_max / a^{j−i}` for `i < j`, `T_max` afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Growth factor `a > 1`.
    pub growth: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Iterations per estimate, `M_b`.
    pub iterations: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            growth: 1.4,
            t_min: 0.245e-3,
            t_max: 7.1e-3,
            iterations: 247,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        ensure(self.growth > 1.0, "growth", "must be > 1")?;
        ensure(self.t_min > 0.0, "t_min", "must be > 0")?;
        ensure(self.t_max >= self.t_min, "t_max", "must be >= t_min")?;
        ensure(
            self.iterations >= self.ramp_len(),
            "iterations",
            format!("must be >= ramp length {}", self.ramp_len()),
        )?;
        Ok(())
    }

    /// Number of distinct interrogation times `j = round(log_a(T_max/T_min)) + 1`.
    pub fn ramp_len(&self) -> usize {
        let steps = ((self.t_max / self.t_min).ln() / self.growth.ln()).round();
        steps.max(0.0) as usize + 1
    }

    /// First interrogation time, recomputed from the rounded ramp length.
    pub fn first_time(&self) -> f64 {
        self.t_max / self.growth.powi(self.ramp_len() as i32 - 1)
    }

    /// `T_i` for `1 ≤ i ≤ M_b`.
    pub fn interrogation_time(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.iterations {
            return Err(Error::IterationOutOfRange {
                i,
                max: self.iterations,
            });
        }
        let j = self.ramp_len();
        Ok(if i < j {
            self.t_max / self.growth.powi((j - i) as i32)
        } else {
            self.t_max
        })
    }

    pub fn times(&self) -> Vec<f64> {
        (1..=self.iterations)
            .map(|i| self.interrogation_time(i).expect("index in range"))
            .collect()
    }
}

/// Free-function form of [`Schedule::interrogation_time`].
pub fn interrogation_time(sched: &Schedule, i: usize) -> Result<f64> {
    sched.interrogation_time(i)
}

/// Discretization of the phase search and of the `p_e` integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSearchConfig {
    pub n_phases: usize,
    pub n_pe: usize,
}

impl Default for PhaseSearchConfig {
    fn default() -> Self {
        Self {
            n_phases: 64,
            n_pe: 101,
        }
    }
}

impl PhaseSearchConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_phases >= 8, "n_phases", "must be >= 8")?;
        ensure(self.n_pe >= 11, "n_pe", "must be >= 11")?;
        Ok(())
    }

    pub fn phase(&self, m: usize) -> f64 {
        2.0 * PI * m as f64 / self.n_phases as f64
    }
}

// Terms with exp(-x) below e^-30 relative to the dominant outcome are dropped.
const CHANNEL_CUTOFF: f64 = 30.0;
// Prior nodes lighter than this fraction of the heaviest are dropped.
const WEIGHT_FLOOR: f64 = 1e-25;
// Quadrature nodes per resolution scale when thinning the prior grid.
const NODES_PER_SCALE: f64 = 3.0;
// Outcome nodes per readout standard deviation.
const OUTCOME_NODES_PER_SIGMA: f64 = 1.5;

/// Readout variance assumed by the utility: the mid-fringe value `1/(4n_i)`.
pub fn planning_variance(n_i: f64) -> f64 {
    likelihood_variance(0.5, n_i)
}

/// Number of midpoint nodes on `[0, 1]` used for the outcome integral; the
/// grid continues with the same spacing beyond both ends.
pub fn outcome_node_count(n_i: f64, n_pe: usize) -> usize {
    let sigma = planning_variance(n_i).sqrt();
    ((OUTCOME_NODES_PER_SIGMA / sigma).ceil() as usize).max(n_pe)
}

/// Expected information gain of one readout, evaluated for many phases
/// against a fixed prior.
///
/// The readout is modelled as `p_e ~ N(L_u(1|B), 1/(4n_i))` and discretized
/// on the midpoint grid of [`outcome_node_count`] nodes over `[0, 1]`, extended
/// past both ends far enough to hold every non-negligible outcome. For every
/// field node the outcome distribution is normalized over the nodes, so the
/// result is the mutual information between field and discretized outcome and
/// is never negative. The variance is the shot-noise maximum, so operating points near
/// the fringe extrema are never credited with more information than the
/// binomial readout provides there.
pub struct UtilityEvaluator {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    /// `2π(Δf − f_B)T_i` per retained node.
    base_phase: Vec<f64>,
    prior_neg_entropy: f64,
    /// Nodes inside `[0, 1]`.
    n_pe: usize,
    /// Extra nodes on either side of `[0, 1]`.
    pad: usize,
    inv_two_var: f64,
}

impl UtilityEvaluator {
    pub fn new(
        prior: &Posterior,
        t_i: f64,
        n_i: f64,
        cfg: &PhaseSearchConfig,
        params: &PhysicsParams,
        delta_f: f64,
    ) -> Self {
        let stride = thinning_stride(prior, t_i, n_i, params);
        let n = prior.n_points();
        let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
        if *idx.last().unwrap() != n - 1 {
            idx.push(n - 1);
        }
        let dens = prior.density();
        let raw: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(m, &k)| {
                let left = if m == 0 { k } else { idx[m - 1] };
                let right = if m + 1 == idx.len() { k } else { idx[m + 1] };
                0.5 * (right - left) as f64 * prior.spacing() * dens[k]
            })
            .collect();
        let w_max = raw.iter().copied().fold(0.0, f64::max);

        let mut weights = Vec::with_capacity(idx.len());
        let mut base_phase = Vec::with_capacity(idx.len());
        for (m, &k) in idx.iter().enumerate() {
            if raw[m] > WEIGHT_FLOOR * w_max {
                weights.push(raw[m]);
                let b = prior.node(k);
                base_phase.push(2.0 * PI * (delta_f - params.larmor_shift(b)) * t_i);
            }
        }
        let kept: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= kept);
        let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let prior_neg_entropy = weights.iter().zip(&log_weights).map(|(w, lw)| w * lw).sum();

        let n_pe = outcome_node_count(n_i, cfg.n_pe);
        let reach = (2.0 * CHANNEL_CUTOFF * planning_variance(n_i)).sqrt();
        Self {
            weights,
            log_weights,
            base_phase,
            prior_neg_entropy,
            n_pe,
            pad: (reach * n_pe as f64).ceil() as usize + 1,
            inv_two_var: 0.5 / planning_variance(n_i),
        }
    }

    /// Expected information gain (nats) for auxiliary phase `phi_c`.
    pub fn utility(&self, phi_c: f64) -> f64 {
        let n_pe = self.n_pe + 2 * self.pad;
        let dp = 1.0 / self.n_pe as f64;
        let c = self.inv_two_var * dp * dp;
        let mut z = vec![0.0; n_pe];
        let mut t = vec![0.0; n_pe];
        let mut x = vec![0.0; n_pe];
        let mut e = vec![0.0; n_pe];
        for k in 0..self.weights.len() {
            let m = 0.5 * (1.0 - (self.base_phase[k] + phi_c).cos());
            // node j sits at (j − pad + ½)dp
            let s = m * self.n_pe as f64 - 0.5 + self.pad as f64;
            let neg_log_l = |j: usize| {
                let d = j as f64 - s;
                c * d * d
            };
            let centre = (s.round().max(0.0) as usize).min(n_pe - 1);
            let reference = neg_log_l(centre);
            let mut lo = centre;
            let mut hi = centre;
            x[centre] = 0.0;
            e[centre] = 1.0;
            let mut sum = 1.0;
            while lo > 0 {
                let xj = neg_log_l(lo - 1) - reference;
                if xj > CHANNEL_CUTOFF {
                    break;
                }
                lo -= 1;
                x[lo] = xj;
                e[lo] = (-xj).exp();
                sum += e[lo];
            }
            while hi + 1 < n_pe {
                let xj = neg_log_l(hi + 1) - reference;
                if xj > CHANNEL_CUTOFF {
                    break;
                }
                hi += 1;
                x[hi] = xj;
                e[hi] = (-xj).exp();
                sum += e[hi];
            }
            let w = self.weights[k];
            let lw = self.log_weights[k];
            let log_sum = sum.ln();
            for j in lo..=hi {
                let joint = w * e[j] / sum;
                if joint > 0.0 {
                    z[j] += joint;
                    t[j] += joint * (lw - x[j] - log_sum);
                }
            }
        }
        let cond: f64 = z
            .iter()
            .zip(&t)
            .filter(|(zj, _)| **zj > 0.0)
            .map(|(zj, tj)| tj - zj * zj.ln())
            .sum();
        cond - self.prior_neg_entropy
    }

    pub fn retained_nodes(&self) -> usize {
        self.weights.len()
    }

    /// Outcome nodes inside `[0, 1]`.
    pub fn outcome_nodes(&self) -> usize {
        self.n_pe
    }
}

/// Grid thinning used for the utility quadrature: keep roughly
/// `NODES_PER_SCALE` nodes per resolution scale, the smaller of the prior's
/// standard deviation and the likelihood width in field units.
fn thinning_stride(prior: &Posterior, t_i: f64, n_i: f64, params: &PhysicsParams) -> usize {
    let slope = PI * params.zeeman().abs() * t_i;
    let like_width = if slope > 0.0 {
        likelihood_variance(0.5, n_i).sqrt() / slope
    } else {
        f64::INFINITY
    };
    let scale = prior.moments().delta_b.min(like_width);
    let stride = (scale / NODES_PER_SCALE / prior.spacing()).floor();
    if stride.is_finite() && stride >= 1.0 {
        stride as usize
    } else {
        1
    }
}

/// Expected Shannon-information gain `U_{φ_c}` of a readout at `(T_i, φ_c)`.
pub fn utility(
    phi_c: f64,
    prior: &Posterior,
    t_i: f64,
    n_i: f64,
    cfg: &PhaseSearchConfig,
    params: &PhysicsParams,
    delta_f: f64,
) -> f64 {
    UtilityEvaluator::new(prior, t_i, n_i, cfg, params, delta_f).utility(phi_c)
}

/// Utility on the `n_phases` grid `2πm/n_phases`.
pub fn phase_utilities(
    prior: &Posterior,
    t_i: f64,
    n_i: f64,
    cfg: &PhaseSearchConfig,
    params: &PhysicsParams,
    delta_f: f64,
) -> Vec<f64> {
    let eval = UtilityEvaluator::new(prior, t_i, n_i, cfg, params, delta_f);
    (0..cfg.n_phases)
        .map(|m| eval.utility(cfg.phase(m)))
        .collect()
}

/// Index of the maximum; values within rounding of the maximum count as ties
/// and the smallest index wins.
pub fn argmax_first(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 + 1e-9 * max.abs();
    values.iter().position(|&v| v >= max - tol).unwrap_or(0)
}

/// Grid phase maximizing the expected information gain.
pub fn optimal_phase(
    prior: &Posterior,
    t_i: f64,
    n_i: f64,
    cfg: &PhaseSearchConfig,
    params: &PhysicsParams,
    delta_f: f64,
) -> f64 {
    let u = phase_utilities(prior, t_i, n_i, cfg, params, delta_f);
    cfg.phase(argmax_first(&u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{gaussian_prior, uniform_prior, Estimate, DEFAULT_POINTS};
    use crate::physics::effective_atoms;
    use approx::assert_relative_eq;

    fn narrow(mu: f64, sigma: f64) -> Posterior {
        gaussian_prior(
            &Estimate {
                b_est: mu,
                delta_b: sigma,
            },
            mu - 5.0,
            mu + 5.0,
            DEFAULT_POINTS,
        )
        .unwrap()
    }

    #[test]
    fn default_schedule_ramp() {
        let s = Schedule::default();
        assert_eq!(s.ramp_len(), 11);
        assert_relative_eq!(
            s.first_time(),
            2.454_584_525_386_153e-4,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            s.interrogation_time(1).unwrap(),
            s.first_time(),
            max_relative = 1e-15
        );
        assert_eq!(s.interrogation_time(11).unwrap(), 7.1e-3);
        assert_eq!(s.interrogation_time(247).unwrap(), 7.1e-3);
        assert!(s.interrogation_time(0).is_err());
        assert!(s.interrogation_time(248).is_err());
    }

    #[test]
    fn schedule_is_monotone_with_j_distinct_values() {
        let s = Schedule::default();
        let t = s.times();
        assert!(t.windows(2).all(|w| w[1] >= w[0]));
        let mut distinct = t.clone();
        distinct.dedup();
        assert_eq!(distinct.len(), s.ramp_len());
    }

    #[test]
    fn schedule_validation() {
        let mut s = Schedule::default();
        s.iterations = 5;
        assert!(s.validate().is_err());
        s = Schedule::default();
        s.growth = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn narrow_prior_has_no_information_left() {
        let params = PhysicsParams::default();
        let prior = narrow(1.0, 1e-5);
        let n = effective_atoms(&params, 7.1e-3);
        let u = phase_utilities(
            &prior,
            7.1e-3,
            n,
            &PhaseSearchConfig::default(),
            &params,
            0.0,
        );
        let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(max < 1e-3, "{max}");
        assert!(u.iter().all(|&v| v >= -1e-9));
    }

    #[test]
    fn vanishing_interrogation_time_is_uninformative() {
        let params = PhysicsParams::default();
        let prior = narrow(0.0, 1.0);
        let u = phase_utilities(
            &prior,
            1e-12,
            4000.0,
            &PhaseSearchConfig::default(),
            &params,
            0.0,
        );
        assert!(u.iter().all(|&v| v.abs() < 1e-6), "{u:?}");
    }

    #[test]
    fn utility_is_two_pi_periodic() {
        let params = PhysicsParams::default();
        let prior = narrow(0.3, 0.01);
        let cfg = PhaseSearchConfig::default();
        let ev = UtilityEvaluator::new(&prior, 7.1e-3, 3924.0, &cfg, &params, 0.0);
        for m in 0..16 {
            let phi = 0.37 * m as f64;
            assert!((ev.utility(phi) - ev.utility(phi + 2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_prior_at_short_time_is_phase_independent() {
        let params = PhysicsParams::default();
        // prior spans ~20 fringe periods of T = 1 ms
        let est = Estimate {
            b_est: 0.0,
            delta_b: 1e4,
        };
        let prior = gaussian_prior(&est, -700.0, 700.0, 8192).unwrap();
        let u = phase_utilities(
            &prior,
            1e-3,
            8000.0,
            &PhaseSearchConfig::default(),
            &params,
            0.0,
        );
        let mean = u.iter().sum::<f64>() / u.len() as f64;
        let spread = u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - u.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(spread < 0.05 * mean, "{spread} {mean}");
    }

    #[test]
    fn optimal_phase_lands_on_fringe_slope() {
        let params = PhysicsParams::default();
        let cfg = PhaseSearchConfig::default();
        for &(b0, t) in &[(0.0, 7.1e-3), (1.7, 7.1e-3), (-3.2, 2e-3), (12.0, 0.5e-3)] {
            let sigma = 0.2 * params.fringe_period(t);
            let prior = gaussian_prior(
                &Estimate {
                    b_est: b0,
                    delta_b: sigma,
                },
                b0 - params.dynamic_range(t),
                b0 + params.dynamic_range(t),
                DEFAULT_POINTS,
            )
            .unwrap();
            let n = effective_atoms(&params, t);
            let phi = optimal_phase(&prior, t, n, &cfg, &params, 0.0);
            let s = (2.0 * PI * (0.0 - params.larmor_shift(b0)) * t + phi).sin();
            assert!(s.abs() > 0.9, "b0={b0} t={t} phi={phi} sin={s}");
        }
    }

    #[test]
    fn argmax_prefers_smallest_on_ties() {
        assert_eq!(argmax_first(&[1.0, 2.0, 2.0, 1.0]), 1);
        assert_eq!(argmax_first(&[3.0, 3.0 - 1e-15, 1.0]), 0);
    }

    #[test]
    fn uniform_one_period_prior_gives_flat_utility() {
        let params = PhysicsParams::default();
        let t1 = Schedule::default().first_time();
        let prior = uniform_prior(0.0, t1, &params, DEFAULT_POINTS).unwrap();
        let n = effective_atoms(&params, t1);
        let u = phase_utilities(&prior, t1, n, &PhaseSearchConfig::default(), &params, 0.0);
        let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
        assert!((max - min) < 1e-3 * max, "{min} {max}");
    }
}
