//! CPT-Ramsey signal model and the stochastic readout channel.
//!
//! Units throughout: magnetic field in nT, frequencies in Hz, times in s.
//! The Zeeman shift between the two magnetically sensitive ground states is
//! `f_B = Δm_F γ B`; with the ⁸⁷Rb defaults (`Δm_F = -2`, `γ = 7 Hz/nT`) a
//! positive field gives a negative shift.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Physical constants of the sensor model. Defaults are the ⁸⁷Rb cold-atom
/// apparatus values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// Gyromagnetic ratio γ, Hz/nT.
    pub gamma: f64,
    /// Difference of magnetic quantum numbers Δm_F.
    pub delta_mf: i32,
    /// Excited-state decay rate Γ, Hz.
    pub decay_rate: f64,
    /// Initial average Rabi frequency Ω₀, Hz.
    pub rabi0: f64,
    /// CPT beam width σ_c, m.
    pub beam_width: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Gaussian coherence time T_χ, s.
    pub coherence_time: f64,
    /// Effective-atom-number amplitude A.
    pub atom_amplitude: f64,
    /// Readout quality factor D in (0, 1].
    pub readout_quality: f64,
    /// Fixed cycle period T_c, s.
    pub cycle_period: f64,
    /// CPT preparation pulse length τ_p, s.
    pub prep_pulse: f64,
    /// Detection pulse length τ_d, s.
    pub detect_pulse: f64,
    /// Light-shift phase φ_ls, rad. Zero once the preparation pulse fully
    /// pumps the dark state.
    pub light_shift_phase: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            gamma: 7.0,
            delta_mf: -2,
            decay_rate: 5.746e6,
            rabi0: 0.18e6,
            beam_width: 1.83e-3,
            gravity: 9.81,
            coherence_time: 10.0e-3,
            atom_amplitude: 10755.0,
            readout_quality: 1.0,
            cycle_period: 73e-3,
            prep_pulse: 300e-6,
            detect_pulse: 50e-6,
            light_shift_phase: 0.0,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        ensure(self.gamma > 0.0, "gamma", "must be > 0")?;
        ensure(self.delta_mf != 0, "delta_mf", "must be non-zero")?;
        ensure(self.decay_rate > 0.0, "decay_rate", "must be > 0")?;
        ensure(self.rabi0 >= 0.0, "rabi0", "must be >= 0")?;
        ensure(self.beam_width > 0.0, "beam_width", "must be > 0")?;
        ensure(self.coherence_time > 0.0, "coherence_time", "must be > 0")?;
        ensure(self.atom_amplitude > 0.0, "atom_amplitude", "must be > 0")?;
        ensure(
            self.readout_quality > 0.0 && self.readout_quality <= 1.0,
            "readout_quality",
            "must lie in (0, 1]",
        )?;
        ensure(self.cycle_period > 0.0, "cycle_period", "must be > 0")?;
        ensure(self.prep_pulse >= 0.0, "prep_pulse", "must be >= 0")?;
        ensure(self.detect_pulse >= 0.0, "detect_pulse", "must be >= 0")?;
        Ok(())
    }

    /// Signed Zeeman coefficient `Δm_F γ`, Hz/nT.
    pub fn zeeman(&self) -> f64 {
        f64::from(self.delta_mf) * self.gamma
    }

    /// Zeeman shift `f_B = Δm_F γ B`, Hz.
    pub fn larmor_shift(&self, b: f64) -> f64 {
        self.zeeman() * b
    }

    /// Fringe period in field units, `1/(|Δm_F γ| T_R)`, nT.
    pub fn fringe_period(&self, t_r: f64) -> f64 {
        1.0 / (self.zeeman().abs() * t_r)
    }

    /// Unambiguous half-range `B_max = 1/(2|Δm_F γ| T_R)`, nT.
    pub fn dynamic_range(&self, t_r: f64) -> f64 {
        0.5 * self.fringe_period(t_r)
    }
}

/// True magnetic field as a piecewise-constant function of wall-clock time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct FieldProfile {
    segments: Vec<(f64, f64)>,
}

impl FieldProfile {
    /// Segments are `(start_time s, B nT)`; each holds until the next start.
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        ensure(!segments.is_empty(), "field", "needs at least one segment")?;
        ensure(
            segments[0].0 == 0.0,
            "field",
            "first segment must start at t = 0",
        )?;
        ensure(
            segments.windows(2).all(|w| w[1].0 > w[0].0),
            "field",
            "segment start times must be strictly increasing",
        )?;
        ensure(
            segments.iter().all(|(t, b)| t.is_finite() && b.is_finite()),
            "field",
            "segment values must be finite",
        )?;
        Ok(Self { segments })
    }

    pub fn constant(b: f64) -> Self {
        Self {
            segments: vec![(0.0, b)],
        }
    }

    /// Equal-length steps: `values[k]` holds on `[k·interval, (k+1)·interval)`.
    pub fn steps(interval: f64, values: &[f64]) -> Result<Self> {
        ensure(interval > 0.0, "field", "step interval must be > 0")?;
        Self::new(
            values
                .iter()
                .enumerate()
                .map(|(k, &b)| (k as f64 * interval, b))
                .collect(),
        )
    }

    /// Field-tracking profile: two +`step` increments followed by a return to `base`.
    pub fn tracking(base: f64, step: f64, interval: f64) -> Result<Self> {
        Self::steps(interval, &[base, base + step, base + 2.0 * step, base])
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.segments.partition_point(|&(start, _)| start <= t);
        self.segments[idx.saturating_sub(1)].1
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.segments
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, b)| {
                (lo.min(b), hi.max(b))
            })
    }
}

impl TryFrom<Vec<(f64, f64)>> for FieldProfile {
    type Error = Error;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FieldProfile> for Vec<(f64, f64)> {
    fn from(p: FieldProfile) -> Self {
        p.segments
    }
}

/// Controls of one interferometry cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyConfig {
    /// Interrogation time T_R, s.
    pub t_r: f64,
    /// Auxiliary phase φ_c, rad.
    pub phi_c: f64,
    /// Two-photon detuning Δf, Hz.
    pub delta_f: f64,
}

impl RamseyConfig {
    pub fn new(t_r: f64, phi_c: f64, delta_f: f64) -> Self {
        Self {
            t_r,
            phi_c,
            delta_f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    /// Normalized population probability.
    pub p_e: f64,
    /// Effective atom number used to draw the shot.
    pub n_eff: f64,
    pub cycle_index: u64,
    /// Instant at which the field was sampled, s.
    pub wall_time: f64,
}

/// Rabi frequency seen by the cloud after falling for `t_fall`:
/// `Ω₀(1 − k z²)` with `z = g t²/2`, `k = 1/(2σ_c²)`, clamped at zero.
pub fn rabi_at_fall(params: &PhysicsParams, t_fall: f64) -> f64 {
    let z = fall_distance(params, t_fall);
    let k = 1.0 / (2.0 * params.beam_width * params.beam_width);
    (params.rabi0 * (1.0 - k * z * z)).max(0.0)
}

pub fn fall_distance(params: &PhysicsParams, t_fall: f64) -> f64 {
    0.5 * params.gravity * t_fall * t_fall
}

/// `α = Ω²/(Γ² + 3Ω² + 4Δf²)`; lies in `[0, 1/3)`.
pub fn alpha_factor(params: &PhysicsParams, omega: f64, delta_f: f64) -> f64 {
    let o2 = omega * omega;
    let denom = params.decay_rate * params.decay_rate + 3.0 * o2 + 4.0 * delta_f * delta_f;
    o2 / denom
}

/// Transmitted CPT-Ramsey signal with Gaussian decoherence, proportionality
/// constant 1. `α` is evaluated at the cloud position reached after `T_R` of
/// free fall.
pub fn transmitted_signal(params: &PhysicsParams, cfg: &RamseyConfig, b: f64) -> f64 {
    let omega = rabi_at_fall(params, cfg.t_r);
    let alpha = alpha_factor(params, omega, cfg.delta_f);
    transmitted_signal_with_alpha(params, cfg, b, alpha)
}

/// [`transmitted_signal`] with `α` supplied by the caller.
pub fn transmitted_signal_with_alpha(
    params: &PhysicsParams,
    cfg: &RamseyConfig,
    b: f64,
    alpha: f64,
) -> f64 {
    signal_from_fringe(
        params,
        cfg.t_r,
        alpha,
        light_shifted_phase(params, cfg, b).cos(),
    )
}

fn light_shifted_phase(params: &PhysicsParams, cfg: &RamseyConfig, b: f64) -> f64 {
    2.0 * PI * (cfg.delta_f - params.larmor_shift(b)) * cfg.t_r - params.light_shift_phase
}

fn signal_from_fringe(params: &PhysicsParams, t_r: f64, alpha: f64, fringe_cos: f64) -> f64 {
    let g = params.decay_rate;
    let readout = alpha * (-alpha * g * params.detect_pulse).exp();
    let pumped = 1.0 - (-alpha * g * params.prep_pulse).exp();
    let envelope = decoherence_envelope(params, t_r);
    let fringe = fringe_cos / params.light_shift_phase.cos().abs();
    1.0 - readout * (1.0 - pumped * envelope * fringe)
}

/// [`transmitted_signal`] with the fringe term read out through the binomial
/// channel: `cos(·)` is replaced by `1 − 2k/n`, `k ~ Binomial(n, ½(1 − cos(·)))`,
/// `n = round(D² N_eff(T_R))`.
pub fn sample_transmitted_signal<R: Rng + ?Sized>(
    params: &PhysicsParams,
    cfg: &RamseyConfig,
    b: f64,
    rng: &mut R,
) -> Result<f64> {
    let n = shot_count(params, cfg.t_r)?;
    let p = (0.5 * (1.0 - light_shifted_phase(params, cfg, b).cos())).clamp(0.0, 1.0);
    let k = Binomial::new(n, p)
        .map_err(|e| Error::InvalidParameter {
            name: "p",
            reason: e.to_string(),
        })?
        .sample(rng);
    let alpha = alpha_factor(params, rabi_at_fall(params, cfg.t_r), cfg.delta_f);
    Ok(signal_from_fringe(
        params,
        cfg.t_r,
        alpha,
        1.0 - 2.0 * k as f64 / n as f64,
    ))
}

/// `e^{-(T_R/T_χ)²}`.
pub fn decoherence_envelope(params: &PhysicsParams, t_r: f64) -> f64 {
    let x = t_r / params.coherence_time;
    (-x * x).exp()
}

/// Fringe phase `2π(Δf − f_B)T_R + φ_c`.
pub fn fringe_phase(params: &PhysicsParams, cfg: &RamseyConfig, b: f64) -> f64 {
    2.0 * PI * (cfg.delta_f - params.larmor_shift(b)) * cfg.t_r + cfg.phi_c
}

/// Normalized phase-domain signal `½{1 − cos[2π(Δf − f_B)T_R + φ_c]}`.
pub fn ideal_probability(params: &PhysicsParams, cfg: &RamseyConfig, b: f64) -> f64 {
    0.5 * (1.0 - fringe_phase(params, cfg, b).cos())
}

/// `N_eff = A e^{−2(T_R/T_χ)²}`.
pub fn effective_atoms(params: &PhysicsParams, t_r: f64) -> f64 {
    let x = t_r / params.coherence_time;
    params.atom_amplitude * (-2.0 * x * x).exp()
}

/// Integer shot count `round(D² N_eff)` used by the binomial channel.
pub fn shot_count(params: &PhysicsParams, t_r: f64) -> Result<u64> {
    let d = params.readout_quality;
    let n = (d * d * effective_atoms(params, t_r)).round();
    if n < 1.0 || !n.is_finite() {
        return Err(Error::InvalidConfiguration(format!(
            "no effective atoms remain at T_R = {t_r:e} s"
        )));
    }
    Ok(n as u64)
}

/// Instant within a cycle at which the field is sampled: the middle of the
/// free-evolution interval.
pub fn sampling_instant(params: &PhysicsParams, cycle_start: f64, t_r: f64) -> f64 {
    cycle_start + params.prep_pulse + 0.5 * t_r
}

/// One shot-noise-limited readout. The field is read from `profile` at
/// `wall_time`; the excitation fraction is drawn as `k/n` with
/// `k ~ Binomial(n, p)` and `n = round(D² N_eff(T_R))`.
pub fn sample_measurement<R: Rng + ?Sized>(
    params: &PhysicsParams,
    cfg: &RamseyConfig,
    profile: &FieldProfile,
    wall_time: f64,
    cycle_index: u64,
    rng: &mut R,
) -> Result<MeasurementOutcome> {
    ensure(wall_time >= 0.0, "wall_time", "must be >= 0")?;
    let n = shot_count(params, cfg.t_r)?;
    let b = profile.value_at(wall_time);
    let p = ideal_probability(params, cfg, b).clamp(0.0, 1.0);
    let binom = Binomial::new(n, p).map_err(|e| Error::InvalidParameter {
        name: "p",
        reason: e.to_string(),
    })?;
    let k = binom.sample(rng);
    Ok(MeasurementOutcome {
        p_e: k as f64 / n as f64,
        n_eff: n as f64,
        cycle_index,
        wall_time,
    })
}

/// Noise-free counterpart of [`sample_measurement`].
pub fn noiseless_measurement(
    params: &PhysicsParams,
    cfg: &RamseyConfig,
    profile: &FieldProfile,
    wall_time: f64,
    cycle_index: u64,
) -> Result<MeasurementOutcome> {
    let n = shot_count(params, cfg.t_r)?;
    let b = profile.value_at(wall_time);
    Ok(MeasurementOutcome {
        p_e: ideal_probability(params, cfg, b).clamp(0.0, 1.0),
        n_eff: n as f64,
        cycle_index,
        wall_time,
    })
}

/// Maps a raw transmitted signal onto `[0, 1]` using the fringe extrema
/// measured beforehand.
pub fn normalize_raw(raw: f64, s_min: f64, s_max: f64) -> Result<f64> {
    if !(s_max > s_min) {
        return Err(Error::InvalidCalibration { s_min, s_max });
    }
    Ok(((raw - s_min) / (s_max - s_min)).clamp(0.0, 1.0))
}
