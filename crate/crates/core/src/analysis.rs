//! Figures of merit computed from run traces: uncertainty and sensitivity
//! records, power-law fits, asymptotic limits, dB gains and the coherence-time
//! fit of a Ramsey fringe.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::physics::{alpha_factor, effective_atoms, rabi_at_fall, PhysicsParams};
use crate::policy::Schedule;

/// Contribution of one log row to the cumulative time budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// Interrogation time spent in this row, s.
    pub interrogation: f64,
    /// Cycles spent in this row.
    pub cycles: u32,
    /// Uncertainty after this row, nT.
    pub delta_b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRecord {
    pub iteration: usize,
    /// Total interrogation time `T`, s.
    pub t_total: f64,
    /// Averaging time `τ`, s.
    pub tau: f64,
    pub delta_b: f64,
    /// `ΔB√T`, nT/√Hz.
    pub eta_t: f64,
    /// `ΔB√τ`, nT/√Hz.
    pub eta_tau: f64,
}

/// Accumulates `T` and `τ = cycles·T_c` along a log.
pub fn trace_from_run(entries: &[TraceEntry], cycle_period: f64) -> Result<Vec<SensitivityRecord>> {
    if entries.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut t_total = 0.0;
    let mut cycles = 0u64;
    Ok(entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            t_total += e.interrogation;
            cycles += u64::from(e.cycles);
            let tau = cycles as f64 * cycle_period;
            SensitivityRecord {
                iteration: k + 1,
                t_total,
                tau,
                delta_b: e.delta_b,
                eta_t: e.delta_b * t_total.sqrt(),
                eta_tau: e.delta_b * tau.sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    DeltaB,
    EtaT,
    EtaTau,
}

impl Quantity {
    pub fn of(self, r: &SensitivityRecord) -> f64 {
        match self {
            Quantity::DeltaB => r.delta_b,
            Quantity::EtaT => r.eta_t,
            Quantity::EtaTau => r.eta_tau,
        }
    }
}

/// `y ≈ prefactor · T^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    /// Standard error of the slope.
    pub exponent_err: f64,
    pub prefactor: f64,
}

/// Unweighted least-squares line through `(ln x, ln y)`.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    ensure(xs.len() == ys.len(), "ys", "length must match xs")?;
    ensure(xs.len() >= 3, "xs", "need at least 3 points")?;
    ensure(
        xs.iter().chain(ys).all(|v| *v > 0.0 && v.is_finite()),
        "xs",
        "all values must be positive and finite",
    )?;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    ensure(sxx > 0.0, "xs", "degenerate abscissa")?;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(ScalingFit {
        exponent: slope,
        exponent_err: (rss / (n - 2.0) / sxx).sqrt(),
        prefactor: intercept.exp(),
    })
}

/// Power-law fit of `quantity` against `T` over iterations `i_lo..=i_hi`.
pub fn fit_scaling(
    records: &[SensitivityRecord],
    i_lo: usize,
    i_hi: usize,
    quantity: Quantity,
) -> Result<ScalingFit> {
    if i_hi < i_lo + 4 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("iterations {i_lo}..={i_hi} span fewer than 5 points"),
        });
    }
    let window: Vec<&SensitivityRecord> = records
        .iter()
        .filter(|r| (i_lo..=i_hi).contains(&r.iteration))
        .collect();
    if window.len() < 5 {
        return Err(Error::InvalidParameter {
            name: "window",
            reason: format!("only {} records in {i_lo}..={i_hi}", window.len()),
        });
    }
    let xs: Vec<f64> = window.iter().map(|r| r.t_total).collect();
    let ys: Vec<f64> = window.iter().map(|r| quantity.of(r)).collect();
    fit_power_law(&xs, &ys)
}

/// Closed-form plateau behaviour of the adaptive protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesAsymptotics {
    /// `C = 1/(2π|Δm_F γ|)`, nT·s.
    pub c: f64,
    /// `N_j = N_eff(T_max)`.
    pub n_j: f64,
    pub t_max: f64,
    /// `C/√(N_j T_max)`, nT/√Hz.
    pub eta_limit: f64,
    /// `C√T_c/(√N_j T_max)`, nT/√Hz.
    pub eta_avg_limit: f64,
}

impl BayesAsymptotics {
    /// `C/√(N_j T_max T)`, nT.
    pub fn delta_b_limit(&self, t_total: f64) -> f64 {
        self.c / (self.n_j * self.t_max * t_total).sqrt()
    }
}

pub fn bayes_asymptotics(sched: &Schedule, params: &PhysicsParams) -> BayesAsymptotics {
    let c = 1.0 / (2.0 * PI * params.zeeman().abs());
    let n_j = effective_atoms(params, sched.t_max);
    BayesAsymptotics {
        c,
        n_j,
        t_max: sched.t_max,
        eta_limit: c / (n_j * sched.t_max).sqrt(),
        eta_avg_limit: c * params.cycle_period.sqrt() / (n_j.sqrt() * sched.t_max),
    }
}

/// Ideal-estimator uncertainty `C/√(Σ_{k≤i} N_k T_k²)` for every iteration.
pub fn ideal_uncertainty_trace(sched: &Schedule, params: &PhysicsParams) -> Vec<f64> {
    let c = 1.0 / (2.0 * PI * params.zeeman().abs());
    let mut info = 0.0;
    sched
        .times()
        .into_iter()
        .map(|t| {
            info += effective_atoms(params, t) * t * t;
            c / info.sqrt()
        })
        .collect()
}

/// Sensitivity gain in dB, `10·log10(eta_ref/eta_new)`.
///
/// Ratios of sensitivities are amplitude ratios; the ten-log convention is
/// used on purpose so that a sensitivity ratio of 2 reads as 3 dB.
pub fn gain_db(eta_ref: f64, eta_new: f64) -> Result<f64> {
    ensure(eta_ref > 0.0, "eta_ref", "must be > 0")?;
    ensure(eta_new > 0.0, "eta_new", "must be > 0")?;
    Ok(10.0 * (eta_ref / eta_new).log10())
}

/// Sensitivity ratio `Q = 2T_max√N_j/(T_R√N_eff)` between a frequentist lock
/// at `T_R` and the adaptive plateau.
pub fn q_factor(t_r: f64, sched: &Schedule, params: &PhysicsParams) -> f64 {
    2.0 * sched.t_max * effective_atoms(params, sched.t_max).sqrt()
        / (t_r * effective_atoms(params, t_r).sqrt())
}

/// Median and 68.3% percentile band of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation percentile, `q ∈ [0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

fn percentile_sorted(v: &[f64], q: f64) -> f64 {
    match v.len() {
        0 => f64::NAN,
        1 => v[0],
        n => {
            let pos = q.clamp(0.0, 100.0) / 100.0 * (n - 1) as f64;
            let k = pos.floor() as usize;
            let t = pos - k as f64;
            if k + 1 < n {
                v[k] * (1.0 - t) + v[k + 1] * t
            } else {
                v[n - 1]
            }
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

pub fn band(values: &[f64]) -> Band {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    Band {
        median: percentile_sorted(&v, 50.0),
        lo: percentile_sorted(&v, 15.85),
        hi: percentile_sorted(&v, 84.15),
    }
}

/// Fitted Ramsey-fringe decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceFit {
    /// `T_χ`, s; infinite when the fitted decay rate is not positive.
    pub t_chi: f64,
    /// `1/T_χ²`, s⁻².
    pub kappa: f64,
    pub kappa_err: f64,
    /// Beat frequency `Δf − f_B`, Hz.
    pub beat: f64,
    pub residual_rms: f64,
}

/// Known, `T_R`-dependent prefactors of the transmitted signal:
/// `S = 1 − r + r·P·e^{−κT²}·cos(…)/|cos φ_ls|`.
fn signal_prefactors(params: &PhysicsParams, t_r: f64, delta_f: f64) -> (f64, f64) {
    let alpha = alpha_factor(params, rabi_at_fall(params, t_r), delta_f);
    let g = params.decay_rate;
    let r = alpha * (-alpha * g * params.detect_pulse).exp();
    let pumped = 1.0 - (-alpha * g * params.prep_pulse).exp();
    (r, pumped / params.light_shift_phase.cos().abs())
}

/// Nonlinear least-squares fit of the Gaussian-damped fringe to samples
/// `(T_R, signal)` taken at detuning `delta_f`. The optical prefactors are
/// known from `params`; decay rate, beat frequency and the two quadrature
/// amplitudes are free.
pub fn fit_coherence(
    samples: &[(f64, f64)],
    params: &PhysicsParams,
    delta_f: f64,
) -> Result<CoherenceFit> {
    ensure(samples.len() >= 20, "samples", "need at least 20 samples")?;
    ensure(
        samples
            .iter()
            .all(|(t, s)| *t > 0.0 && t.is_finite() && s.is_finite()),
        "samples",
        "interrogation times must be positive and values finite",
    )?;
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let pre: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| signal_prefactors(params, t, delta_f))
        .collect();
    // fringe term g(T) = e^{−κT²}·cos(2πνT − φ₀ − φ_ls) with its optical scale removed
    let g: Vec<f64> = samples
        .iter()
        .zip(&pre)
        .map(|((_, s), (r, k))| (s - 1.0 + r) / (r * k))
        .collect();
    ensure(
        g.iter().all(|v| v.is_finite()),
        "samples",
        "optical prefactor vanishes",
    )?;

    let (beat0, kappa0) = initial_guess(&ts, &g);
    let mut theta = [kappa0, beat0, 0.0, 0.0];
    let (ac, as_) = linear_amplitudes(&ts, &g, kappa0, beat0);
    theta[2] = ac;
    theta[3] = as_;

    let y: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let model = |th: &[f64; 4], i: usize| -> (f64, [f64; 4]) {
        let t = ts[i];
        let (r, k) = pre[i];
        let e = (-th[0] * t * t).exp();
        let (sn, cs) = (2.0 * PI * th[1] * t).sin_cos();
        let fringe = e * (th[2] * cs + th[3] * sn);
        let scale = r * k;
        (
            1.0 - r + scale * fringe,
            [
                -scale * t * t * fringe,
                scale * e * 2.0 * PI * t * (-th[2] * sn + th[3] * cs),
                scale * e * cs,
                scale * e * sn,
            ],
        )
    };
    let fit = levenberg_marquardt(theta, y.len(), |th, i| {
        let (m, jac) = model(th, i);
        (y[i] - m, jac)
    })?;
    let n = y.len() as f64;
    let residual_rms = (fit.rss / n).sqrt();
    let sigma2 = fit.rss / (n - 4.0);
    let kappa_err = (fit.cov_diag[0] * sigma2).max(0.0).sqrt();
    let kappa = fit.theta[0];
    if !kappa.is_finite() || !kappa_err.is_finite() {
        return Err(Error::Fit {
            reason: "non-finite decay rate".into(),
            residual_rms,
        });
    }
    Ok(CoherenceFit {
        t_chi: if kappa > 0.0 {
            kappa.sqrt().recip()
        } else {
            f64::INFINITY
        },
        kappa,
        kappa_err,
        beat: fit.theta[1].abs(),
        residual_rms,
    })
}

/// Periodogram peak for the beat, then a coarse scan of the decay rate with
/// amplitudes solved linearly.
fn initial_guess(ts: &[f64], g: &[f64]) -> (f64, f64) {
    let t_lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = t_hi - t_lo;
    let nyquist = 0.5 * (ts.len() - 1) as f64 / span;
    let step = 1.0 / (8.0 * span);
    let n_freq = (nyquist / step).ceil() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for m in 0..=n_freq {
        let nu = m as f64 * step;
        let (mut c, mut s) = (0.0, 0.0);
        for (t, v) in ts.iter().zip(g) {
            let (sn, cs) = (2.0 * PI * nu * t).sin_cos();
            c += v * cs;
            s += v * sn;
        }
        let power = c * c + s * s;
        if power > best.1 {
            best = (nu, power);
        }
    }
    let beat = best.0;
    let mut kbest = (0.0, f64::INFINITY);
    for m in 0..=60 {
        // decay times from 10·span down to span/100, plus no decay
        let kappa = if m == 0 {
            0.0
        } else {
            let tc = 10.0 * t_hi * 10f64.powf(-(m as f64) / 20.0);
            1.0 / (tc * tc)
        };
        let (a, b) = linear_amplitudes(ts, g, kappa, beat);
        let rss: f64 = ts
            .iter()
            .zip(g)
            .map(|(t, v)| {
                let (sn, cs) = (2.0 * PI * beat * t).sin_cos();
                (v - (-kappa * t * t).exp() * (a * cs + b * sn)).powi(2)
            })
            .sum();
        if rss < kbest.1 {
            kbest = (kappa, rss);
        }
    }
    (beat, kbest.0)
}

fn linear_amplitudes(ts: &[f64], g: &[f64], kappa: f64, beat: f64) -> (f64, f64) {
    let (mut cc, mut cs_, mut ss, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, v) in ts.iter().zip(g) {
        let e = (-kappa * t * t).exp();
        let (sn, cs) = (2.0 * PI * beat * t).sin_cos();
        let (c, s) = (e * cs, e * sn);
        cc += c * c;
        cs_ += c * s;
        ss += s * s;
        yc += v * c;
        ys += v * s;
    }
    let det = cc * ss - cs_ * cs_;
    if det.abs() < 1e-300 {
        return (0.0, 0.0);
    }
    ((yc * ss - ys * cs_) / det, (ys * cc - yc * cs_) / det)
}

struct LmResult {
    theta: [f64; 4],
    rss: f64,
    /// Diagonal of `(JᵀJ)⁻¹` at the optimum.
    cov_diag: [f64; 4],
}

/// Levenberg–Marquardt on `n` residuals; `f(θ, i)` returns residual `i` and
/// the gradient of the model (not of the residual) with respect to `θ`.
fn levenberg_marquardt(
    mut theta: [f64; 4],
    n: usize,
    f: impl Fn(&[f64; 4], usize) -> (f64, [f64; 4]),
) -> Result<LmResult> {
    let rss_of = |th: &[f64; 4]| (0..n).map(|i| f(th, i).0.powi(2)).sum::<f64>();
    let normal = |th: &[f64; 4]| {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for i in 0..n {
            let (r, j) = f(th, i);
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        (jtj, jtr)
    };
    let mut rss = rss_of(&theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let (jtj, jtr) = normal(&theta);
        let mut a = jtj;
        for k in 0..4 {
            a[k][k] += lambda * jtj[k][k].max(1e-300);
        }
        let Some(delta) = solve4(a, jtr) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = theta;
        for k in 0..4 {
            trial[k] += delta[k];
        }
        let trial_rss = rss_of(&trial);
        if trial_rss.is_finite() && trial_rss <= rss {
            let improvement = rss - trial_rss;
            theta = trial;
            rss = trial_rss;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement <= 1e-14 * rss.max(1e-300) || rss == 0.0 {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged || !rss.is_finite() {
        return Err(Error::Fit {
            reason: "Levenberg-Marquardt did not converge".into(),
            residual_rms: (rss / n as f64).sqrt(),
        });
    }
    let (jtj, _) = normal(&theta);
    let mut cov_diag = [f64::NAN; 4];
    for k in 0..4 {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        if let Some(col) = solve4(jtj, e) {
            cov_diag[k] = col[k];
        }
    }
    Ok(LmResult {
        theta,
        rss,
        cov_diag,
    })
}

fn solve4(a: [[f64; 4]; 4], b: [f64; 4]) -> Option<[f64; 4]> {
    let m = Matrix4::from_fn(|i, j| a[i][j]);
    let x = m.lu().solve(&Vector4::from(b))?;
    x.iter().all(|v| v.is_finite()).then(|| x.into())
}
