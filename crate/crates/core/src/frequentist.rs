//! Conventional baseline: two-point slope lock to the central Ramsey fringe
//! and the closed-form shot-noise sensitivities.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::physics::{
    effective_atoms, noiseless_measurement, sample_measurement, sampling_instant, FieldProfile,
    MeasurementOutcome, PhysicsParams, RamseyConfig,
};

/// Error-signal magnitude treated as saturated.
pub const SATURATION: f64 = 0.95;
/// Consecutive saturated steps after which the lock is flagged lost.
pub const LOSS_STEPS: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockState {
    /// Estimate of the transition offset `f_B` from `f_c`, Hz.
    pub f_p_est: f64,
    pub loop_gain: f64,
    pub cycle_count: u64,
    saturated_steps: u32,
    lock_lost: bool,
}

impl LockState {
    pub fn new(f_p_est: f64, loop_gain: f64) -> Result<Self> {
        ensure(
            loop_gain > 0.0 && loop_gain <= 2.0,
            "loop_gain",
            "must lie in (0, 2]",
        )?;
        Ok(Self {
            f_p_est,
            loop_gain,
            cycle_count: 0,
            saturated_steps: 0,
            lock_lost: false,
        })
    }

    /// Lock starting on the fringe of field `b`.
    pub fn at_field(b: f64, loop_gain: f64, params: &PhysicsParams) -> Result<Self> {
        Self::new(params.larmor_shift(b), loop_gain)
    }

    pub fn field_estimate(&self, params: &PhysicsParams) -> f64 {
        self.f_p_est / params.zeeman()
    }

    /// Set once the error signal has stayed saturated for [`LOSS_STEPS`] steps.
    pub fn lock_lost(&self) -> bool {
        self.lock_lost
    }
}

/// Result of one `f_p` determination (two cycles).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockStep {
    pub state: LockState,
    /// Field estimate after the update, nT.
    pub b_est: f64,
    pub error_signal: f64,
    pub minus: MeasurementOutcome,
    pub plus: MeasurementOutcome,
}

impl LockStep {
    /// Shot-noise standard deviation of this step's field estimate, propagated
    /// from the two measured excitation fractions.
    pub fn propagated_sigma(&self, t_r: f64, params: &PhysicsParams) -> f64 {
        let var = |m: &MeasurementOutcome| {
            let p = m.p_e.clamp(0.5 / m.n_eff, 1.0 - 0.5 / m.n_eff);
            p * (1.0 - p) / m.n_eff
        };
        let sigma_e = (var(&self.minus) + var(&self.plus)).sqrt();
        self.state.loop_gain * sigma_e / (2.0 * PI * t_r * params.zeeman().abs())
    }
}

fn probe(state: &LockState, t_r: f64, sign: f64) -> RamseyConfig {
    // a detuning of ±1/(4T_R) is a ±π/2 auxiliary phase about f_p_est
    RamseyConfig::new(t_r, sign * FRAC_PI_2, state.f_p_est)
}

fn advance(
    state: &LockState,
    t_r: f64,
    minus: MeasurementOutcome,
    plus: MeasurementOutcome,
    params: &PhysicsParams,
) -> LockStep {
    // p± = ½(1 ± sin θ) with θ = 2π(f_p_est − f_B)T_R, so e = sin θ
    let e = plus.p_e - minus.p_e;
    let mut next = *state;
    next.f_p_est -= state.loop_gain * e / (2.0 * PI * t_r);
    next.cycle_count += 2;
    if e.abs() > SATURATION {
        next.saturated_steps += 1;
    } else {
        next.saturated_steps = 0;
    }
    next.lock_lost |= next.saturated_steps >= LOSS_STEPS;
    LockStep {
        state: next,
        b_est: next.field_estimate(params),
        error_signal: e,
        minus,
        plus,
    }
}

/// One `f_p` determination with shot noise. The two cycles start at
/// `wall_time` and `wall_time + T_c`.
pub fn lock_step<R: Rng + ?Sized>(
    state: &LockState,
    t_r: f64,
    profile: &FieldProfile,
    wall_time: f64,
    params: &PhysicsParams,
    rng: &mut R,
) -> Result<LockStep> {
    let c = state.cycle_count;
    let t0 = sampling_instant(params, wall_time, t_r);
    let t1 = sampling_instant(params, wall_time + params.cycle_period, t_r);
    let minus = sample_measurement(params, &probe(state, t_r, -1.0), profile, t0, c, rng)?;
    let plus = sample_measurement(params, &probe(state, t_r, 1.0), profile, t1, c + 1, rng)?;
    Ok(advance(state, t_r, minus, plus, params))
}

/// Noise-free counterpart of [`lock_step`].
pub fn lock_step_noiseless(
    state: &LockState,
    t_r: f64,
    profile: &FieldProfile,
    wall_time: f64,
    params: &PhysicsParams,
) -> Result<LockStep> {
    let c = state.cycle_count;
    let t0 = sampling_instant(params, wall_time, t_r);
    let t1 = sampling_instant(params, wall_time + params.cycle_period, t_r);
    let minus = noiseless_measurement(params, &probe(state, t_r, -1.0), profile, t0, c)?;
    let plus = noiseless_measurement(params, &probe(state, t_r, 1.0), profile, t1, c + 1)?;
    Ok(advance(state, t_r, minus, plus, params))
}

/// Runs `measurements` consecutive lock steps starting at `start_time`.
pub fn run_lock<R: Rng + ?Sized>(
    initial: LockState,
    t_r: f64,
    measurements: usize,
    profile: &FieldProfile,
    start_time: f64,
    params: &PhysicsParams,
    rng: &mut R,
) -> Result<Vec<LockStep>> {
    let mut state = initial;
    let mut steps = Vec::with_capacity(measurements);
    for m in 0..measurements {
        let wall = start_time + 2.0 * m as f64 * params.cycle_period;
        let step = lock_step(&state, t_r, profile, wall, params, rng)?;
        state = step.state;
        steps.push(step);
    }
    Ok(steps)
}

/// Average sensitivity including dead time, `√T_c/(π|Δm_F γ|T_R√N_eff)`, nT/√Hz.
pub fn fmm_sensitivity_avg(t_r: f64, params: &PhysicsParams) -> f64 {
    params.cycle_period.sqrt()
        / (PI * params.zeeman().abs() * t_r * effective_atoms(params, t_r).sqrt())
}

/// Sensitivity referenced to interrogation time, `1/(π|Δm_F γ|√T_R√N_eff)`, nT/√Hz.
pub fn fmm_sensitivity_t(t_r: f64, params: &PhysicsParams) -> f64 {
    1.0 / (PI * params.zeeman().abs() * t_r.sqrt() * effective_atoms(params, t_r).sqrt())
}

/// Uncertainty after total interrogation time `T ≥ 2T_R`, nT.
pub fn fmm_uncertainty(t_r: f64, total: f64, params: &PhysicsParams) -> f64 {
    1.0 / (PI * params.zeeman().abs() * effective_atoms(params, t_r).sqrt() * (t_r * total).sqrt())
}

/// Alias order of a field estimate: the nearest integer number of fringe
/// periods `1/(|Δm_F γ|T_R)` separating it from the true field.
pub fn alias_order(b_est: f64, b_true: f64, t_r: f64, params: &PhysicsParams) -> i64 {
    ((b_est - b_true) / params.fringe_period(t_r)).round() as i64
}
