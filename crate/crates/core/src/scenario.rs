//! Scenario runner: configuration, deterministic seeding, ensemble
//! orchestration and the CSV/JSON outputs of each experiment.
//!
//! Every run `k` of an ensemble draws from its own ChaCha8 stream
//! (`seed_from_u64(seed)` with stream `k`), so results do not depend on how
//! runs are scheduled across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    band, bayes_asymptotics, fit_coherence, fit_scaling, ideal_uncertainty_trace, median,
    CoherenceFit, Quantity, ScalingFit, SensitivityRecord,
};
use crate::error::{ensure, Error, Result};
use crate::estimator::{bayes_update, recentre, uniform_prior, PriorReset, DEFAULT_POINTS};
use crate::frequentist::{
    alias_order, fmm_sensitivity_avg, fmm_uncertainty, run_lock, LockState, LockStep,
};
use crate::physics::{
    effective_atoms, sample_measurement, sample_transmitted_signal, sampling_instant,
    transmitted_signal, FieldProfile, PhysicsParams, RamseyConfig,
};
use crate::policy::{optimal_phase, PhaseSearchConfig, Schedule};

pub const SCHEMA_VERSION: &str = "cptmag.runlog.v1";

/// Column names of a run log CSV.
pub const RUNLOG_COLUMNS: [&str; 11] = [
    "iteration",
    "T_i_s",
    "phi_c_rad",
    "p_e",
    "n_eff",
    "B_est_nT",
    "delta_B_nT",
    "T_total_s",
    "tau_s",
    "eta_T_pT_sqrtHz",
    "eta_tau_pT_sqrtHz",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Coherence,
    Frequentist,
    #[default]
    Bayesian,
    Track,
    Scaling,
    Compare,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Coherence => "coherence",
            ScenarioKind::Frequentist => "frequentist",
            ScenarioKind::Bayesian => "bayesian",
            ScenarioKind::Track => "track",
            ScenarioKind::Scaling => "scaling",
            ScenarioKind::Compare => "compare",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub n_points: usize,
    pub prior_reset: PriorReset,
    /// Centre of the initial uniform prior, nT.
    pub prior_center: f64,
    /// Two-photon detuning used for every cycle, Hz.
    pub delta_f: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_POINTS,
            prior_reset: PriorReset::Inherit,
            prior_center: 0.0,
            delta_f: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesianConfig {
    /// When set, each run measures its own static field drawn uniformly from
    /// `prior_center ± field_spread·B_max(T_1)` instead of the configured profile.
    pub field_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockConfig {
    pub t_r: f64,
    pub loop_gain: f64,
    /// Total interrogation times at which the ensemble uncertainty is reported, s.
    pub checkpoints: Vec<f64>,
    /// Field the lock starts on; defaults to the profile's initial value.
    pub initial_field: Option<f64>,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            t_r: 7.1e-3,
            loop_gain: 1.0,
            checkpoints: vec![0.1, 0.5, 2.0],
            initial_field: None,
        }
    }
}

impl LockConfig {
    /// Measurements (pairs of cycles) needed to reach total interrogation `t`.
    pub fn measurements_for(&self, t: f64) -> usize {
        ((t / (2.0 * self.t_r)).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Consecutive estimates, each `M_b` iterations long.
    pub estimates: usize,
    /// Convergence band in units of the reported uncertainty.
    pub converge_sigmas: f64,
    /// Largest uncertainty accepted as converged, nT.
    pub max_delta_b: f64,
    /// Iterations the estimate must stay inside the band.
    pub hold: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            estimates: 4,
            converge_sigmas: 3.0,
            max_delta_b: 1.0,
            hold: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceConfig {
    pub delta_f: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    pub shot_noise: bool,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            delta_f: -95_300.0,
            t_min: 0.1e-3,
            t_max: 20e-3,
            samples: 400,
            shot_noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    /// First interrogation times of the adaptive runs, s.
    pub first_times: Vec<f64>,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_points: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            first_times: vec![0.245e-3, 0.49e-3, 0.98e-3],
            sweep_min: 0.1e-3,
            sweep_max: 20e-3,
            sweep_points: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub runs: usize,
    /// `(start s, B nT)` segments; a scenario-specific default when absent.
    pub field: Option<FieldProfile>,
    pub physics: PhysicsParams,
    pub schedule: Schedule,
    pub phase_search: PhaseSearchConfig,
    pub estimator: EstimatorConfig,
    pub bayesian: BayesianConfig,
    pub lock: LockConfig,
    pub track: TrackConfig,
    pub coherence: CoherenceConfig,
    pub compare: CompareConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::default(),
            seed: 0,
            runs: 1,
            field: None,
            physics: PhysicsParams::default(),
            schedule: Schedule::default(),
            phase_search: PhaseSearchConfig::default(),
            estimator: EstimatorConfig::default(),
            bayesian: BayesianConfig::default(),
            lock: LockConfig::default(),
            track: TrackConfig::default(),
            coherence: CoherenceConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn for_scenario(kind: ScenarioKind) -> Self {
        Self {
            scenario: kind,
            ..Self::default()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.runs >= 1, "runs", "must be >= 1")?;
        self.physics.validate()?;
        self.schedule.validate()?;
        self.phase_search.validate()?;
        ensure(
            self.estimator.n_points >= crate::estimator::MIN_POINTS,
            "n_points",
            format!("must be >= {}", crate::estimator::MIN_POINTS),
        )?;
        if let Some(s) = self.bayesian.field_spread {
            ensure(
                (0.0..1.0).contains(&s),
                "field_spread",
                "must lie in [0, 1)",
            )?;
        }
        ensure(
            self.lock.loop_gain > 0.0 && self.lock.loop_gain <= 2.0,
            "loop_gain",
            "must lie in (0, 2]",
        )?;
        ensure(self.lock.t_r > 0.0, "lock.t_r", "must be > 0")?;
        ensure(
            self.lock
                .checkpoints
                .iter()
                .all(|t| *t >= 2.0 * self.lock.t_r),
            "checkpoints",
            "each must be >= 2 T_R",
        )?;
        ensure(self.track.estimates >= 1, "estimates", "must be >= 1")?;
        ensure(self.track.hold >= 1, "hold", "must be >= 1")?;
        ensure(
            self.coherence.samples >= 20,
            "coherence.samples",
            "must be >= 20",
        )?;
        ensure(
            0.0 < self.coherence.t_min && self.coherence.t_min < self.coherence.t_max,
            "coherence.t_min",
            "need 0 < t_min < t_max",
        )?;
        ensure(
            self.compare
                .first_times
                .iter()
                .all(|t| *t > 0.0 && *t <= self.schedule.t_max),
            "first_times",
            "must lie in (0, t_max]",
        )?;
        ensure(
            self.compare.sweep_points >= 2,
            "sweep_points",
            "must be >= 2",
        )?;
        if self.scenario == ScenarioKind::Scaling && self.runs < 100 {
            return Err(Error::InvalidConfiguration(format!(
                "scaling needs runs >= 100, got {}",
                self.runs
            )));
        }
        Ok(())
    }

    /// Field profile in force: the configured one, or the scenario default.
    pub fn field_profile(&self) -> FieldProfile {
        if let Some(f) = &self.field {
            return f.clone();
        }
        match self.scenario {
            ScenarioKind::Coherence => FieldProfile::constant(6850.0),
            ScenarioKind::Track => FieldProfile::tracking(
                30.0,
                20.0,
                self.schedule.iterations as f64 * self.physics.cycle_period,
            )
            .expect("default tracking profile is valid"),
            _ => FieldProfile::constant(30.0),
        }
    }

    /// Copy with the field profile made explicit.
    pub fn resolved(&self) -> Self {
        Self {
            field: Some(self.field_profile()),
            ..self.clone()
        }
    }

    fn initial_interval(&self) -> (f64, f64) {
        let half = self.physics.dynamic_range(self.schedule.first_time());
        let c = self.estimator.prior_center;
        (c - half, c + half)
    }
}

/// One row of a run log. Field values in nT, sensitivities in nT/√Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub iteration: usize,
    pub t_i: f64,
    pub phi_c: f64,
    pub p_e: f64,
    pub n_eff: f64,
    pub b_est: f64,
    pub delta_b: f64,
    pub t_total: f64,
    pub tau: f64,
    pub eta_t: f64,
    pub eta_tau: f64,
    /// Instant the field was sampled, s.
    pub wall_time: f64,
    pub b_true: f64,
}

impl RunRow {
    pub fn record(&self) -> SensitivityRecord {
        SensitivityRecord {
            iteration: self.iteration,
            t_total: self.t_total,
            tau: self.tau,
            delta_b: self.delta_b,
            eta_t: self.eta_t,
            eta_tau: self.eta_tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub seed: u64,
    pub run_index: u64,
    pub rows: Vec<RunRow>,
}

impl RunLog {
    pub fn last(&self) -> Result<&RunRow> {
        self.rows.last().ok_or(Error::EmptyLog)
    }

    pub fn records(&self) -> Vec<SensitivityRecord> {
        self.rows.iter().map(RunRow::record).collect()
    }

    pub fn to_table(&self, name: &str) -> Table {
        let mut t = Table::new(name, &RUNLOG_COLUMNS);
        for r in &self.rows {
            t.push(vec![
                r.iteration.to_string(),
                num(r.t_i),
                num(r.phi_c),
                num(r.p_e),
                num(r.n_eff),
                num(r.b_est),
                num(r.delta_b),
                num(r.t_total),
                num(r.tau),
                num(r.eta_t * 1e3),
                num(r.eta_tau * 1e3),
            ]);
        }
        t
    }
}

/// Shortest representation that parses back to the same value.
fn num(x: f64) -> String {
    if x != 0.0 && x.is_finite() && (x.abs() < 1e-4 || x.abs() >= 1e9) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn opt_num(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// A results table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Numeric values of a column; empty cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[k].parse().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Tables and headline numbers produced by one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    /// Resolved configuration.
    pub config: ScenarioConfig,
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, f64>,
}

impl ScenarioOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn sidecar(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "scenario": self.config.scenario,
            "seed": self.config.seed,
            "runs": self.config.runs,
            "config": serde_json::to_value(&self.config)?,
            "tables": self.tables.iter().map(|t| format!("{}.csv", t.name)).collect::<Vec<_>>(),
            "summary": self.summary,
        }))
    }

    /// Writes `<table>.csv` for every table and `<scenario>.json`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv()?)?;
            written.push(path);
        }
        let path = dir.join(format!("{}.json", self.config.scenario));
        let mut json = serde_json::to_string_pretty(&self.sidecar()?)?;
        json.push('\n');
        fs::write(&path, json)?;
        written.push(path);
        Ok(written)
    }
}

/// Random stream of run `run_index`.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

fn check_interval(cfg: &ScenarioConfig, profile: &FieldProfile) -> Result<()> {
    let (lo, hi) = cfg.initial_interval();
    let (b_min, b_max) = profile.min_max();
    if b_min <= lo || b_max >= hi {
        return Err(Error::InvalidConfiguration(format!(
            "true field range [{b_min}, {b_max}] nT is not inside the initial interval [{lo}, {hi}] nT"
        )));
    }
    Ok(())
}

/// One adaptive estimate of `M_b` iterations, starting from the uniform prior
/// at wall time `start_wall`. `T_total` and `τ` count from the estimate's start.
pub fn adaptive_estimate<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    profile: &FieldProfile,
    start_wall: f64,
    first_iteration: usize,
    rng: &mut R,
) -> Result<Vec<RunRow>> {
    let params = &cfg.physics;
    let sched = &cfg.schedule;
    let est_cfg = &cfg.estimator;
    let n_points = est_cfg.n_points;
    let d2 = params.readout_quality * params.readout_quality;

    let mut post = uniform_prior(est_cfg.prior_center, sched.first_time(), params, n_points)?;
    let mut rows = Vec::with_capacity(sched.iterations);
    let mut t_total = 0.0;
    for i in 1..=sched.iterations {
        let t_i = sched.interrogation_time(i)?;
        let prior = if i == 1 {
            post
        } else {
            let est = post.moments();
            recentre(&post, &est, t_i, params, n_points, est_cfg.prior_reset)?
        };
        let n_i = d2 * effective_atoms(params, t_i);
        let phi = optimal_phase(&prior, t_i, n_i, &cfg.phase_search, params, est_cfg.delta_f);
        let ramsey = RamseyConfig::new(t_i, phi, est_cfg.delta_f);
        let cycle_start = start_wall + (i - 1) as f64 * params.cycle_period;
        let instant = sampling_instant(params, cycle_start, t_i);
        let cycle = (first_iteration + i - 2) as u64;
        let outcome = sample_measurement(params, &ramsey, profile, instant, cycle, rng)?;
        post = bayes_update(&prior, &outcome, &ramsey, params)?;
        let est = post.moments();
        t_total += t_i;
        let tau = i as f64 * params.cycle_period;
        rows.push(RunRow {
            iteration: first_iteration + i - 1,
            t_i,
            phi_c: phi,
            p_e: outcome.p_e,
            n_eff: outcome.n_eff,
            b_est: est.b_est,
            delta_b: est.delta_b,
            t_total,
            tau,
            eta_t: est.delta_b * t_total.sqrt(),
            eta_tau: est.delta_b * tau.sqrt(),
            wall_time: instant,
            b_true: profile.value_at(instant),
        });
    }
    Ok(rows)
}

/// Single adaptive run `run_index` of a bayesian-type configuration.
pub fn bayesian_run(cfg: &ScenarioConfig, run_index: u64) -> Result<RunLog> {
    let mut rng = run_rng(cfg.seed, run_index);
    let profile = match cfg.bayesian.field_spread {
        Some(spread) => {
            let half = cfg.physics.dynamic_range(cfg.schedule.first_time());
            let u: f64 = rng.random_range(-1.0..1.0);
            FieldProfile::constant(cfg.estimator.prior_center + u * spread * half)
        }
        None => cfg.field_profile(),
    };
    check_interval(cfg, &profile)?;
    let rows = adaptive_estimate(cfg, &profile, 0.0, 1, &mut rng)?;
    Ok(RunLog {
        seed: cfg.seed,
        run_index,
        rows,
    })
}

pub fn bayesian_ensemble(cfg: &ScenarioConfig) -> Result<Vec<RunLog>> {
    cfg.validate()?;
    (0..cfg.runs as u64)
        .into_par_iter()
        .map(|k| bayesian_run(cfg, k))
        .collect()
}

/// Per-iteration ensemble statistics of adaptive runs sharing one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTrace {
    pub iteration: Vec<usize>,
    pub t_total: Vec<f64>,
    pub tau: Vec<f64>,
    pub delta_b: Vec<crate::analysis::Band>,
    pub eta_t: Vec<crate::analysis::Band>,
    pub eta_tau: Vec<crate::analysis::Band>,
}

impl EnsembleTrace {
    pub fn from_logs(logs: &[RunLog]) -> Result<Self> {
        let first = logs.first().ok_or(Error::EmptyLog)?;
        let n = first.rows.len();
        let col = |f: fn(&RunRow) -> f64, i: usize| -> Vec<f64> {
            logs.iter().map(|l| f(&l.rows[i])).collect()
        };
        Ok(Self {
            iteration: first.rows.iter().map(|r| r.iteration).collect(),
            t_total: first.rows.iter().map(|r| r.t_total).collect(),
            tau: first.rows.iter().map(|r| r.tau).collect(),
            delta_b: (0..n).map(|i| band(&col(|r| r.delta_b, i))).collect(),
            eta_t: (0..n).map(|i| band(&col(|r| r.eta_t, i))).collect(),
            eta_tau: (0..n).map(|i| band(&col(|r| r.eta_tau, i))).collect(),
        })
    }

    /// Records built from the ensemble medians.
    pub fn median_records(&self) -> Vec<SensitivityRecord> {
        (0..self.iteration.len())
            .map(|i| SensitivityRecord {
                iteration: self.iteration[i],
                t_total: self.t_total[i],
                tau: self.tau[i],
                delta_b: self.delta_b[i].median,
                eta_t: self.eta_t[i].median,
                eta_tau: self.eta_tau[i].median,
            })
            .collect()
    }
}

fn ensemble_table(trace: &EnsembleTrace, ideal: &[f64], extra: &[(&str, Vec<f64>)]) -> Table {
    let mut cols = vec![
        "iteration",
        "T_total_s",
        "tau_s",
        "delta_B_median_nT",
        "delta_B_lo_nT",
        "delta_B_hi_nT",
        "eta_T_median_pT_sqrtHz",
        "eta_T_lo_pT_sqrtHz",
        "eta_T_hi_pT_sqrtHz",
        "eta_tau_median_pT_sqrtHz",
        "eta_tau_lo_pT_sqrtHz",
        "eta_tau_hi_pT_sqrtHz",
        "ideal_delta_B_nT",
    ];
    cols.extend(extra.iter().map(|(name, _)| *name));
    let mut t = Table::new("ensemble", &cols);
    for i in 0..trace.iteration.len() {
        let mut row = vec![
            trace.iteration[i].to_string(),
            num(trace.t_total[i]),
            num(trace.tau[i]),
            num(trace.delta_b[i].median),
            num(trace.delta_b[i].lo),
            num(trace.delta_b[i].hi),
            num(trace.eta_t[i].median * 1e3),
            num(trace.eta_t[i].lo * 1e3),
            num(trace.eta_t[i].hi * 1e3),
            num(trace.eta_tau[i].median * 1e3),
            num(trace.eta_tau[i].lo * 1e3),
            num(trace.eta_tau[i].hi * 1e3),
            num(ideal[i]),
        ];
        row.extend(extra.iter().map(|(_, v)| num(v[i])));
        t.push(row);
    }
    t
}

/// Final-iteration outcome of each run.
fn finals_table(cfg: &ScenarioConfig, logs: &[RunLog]) -> Result<(Table, f64, usize)> {
    let mut t = Table::new(
        "final",
        &[
            "run",
            "B_true_nT",
            "B_est_nT",
            "delta_B_nT",
            "eta_tau_pT_sqrtHz",
            "covered",
            "alias_order",
        ],
    );
    let mut covered = 0usize;
    let mut aliased = 0usize;
    for log in logs {
        let r = log.last()?;
        let ok = (r.b_est - r.b_true).abs() < 3.0 * r.delta_b;
        let k = alias_order(r.b_est, r.b_true, cfg.schedule.t_max, &cfg.physics);
        covered += usize::from(ok);
        aliased += usize::from(k != 0);
        t.push(vec![
            log.run_index.to_string(),
            num(r.b_true),
            num(r.b_est),
            num(r.delta_b),
            num(r.eta_tau * 1e3),
            u8::from(ok).to_string(),
            k.to_string(),
        ]);
    }
    Ok((t, covered as f64 / logs.len() as f64, aliased))
}

pub fn run_bayesian(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    let logs = bayesian_ensemble(&cfg)?;
    let trace = EnsembleTrace::from_logs(&logs)?;
    let ideal = ideal_uncertainty_trace(&cfg.schedule, &cfg.physics);
    let asym = bayes_asymptotics(&cfg.schedule, &cfg.physics);
    let (finals, coverage, aliased) = finals_table(&cfg, &logs)?;
    let last = trace.iteration.len() - 1;
    let mut summary = BTreeMap::new();
    summary.insert("final_tau_s".into(), trace.tau[last]);
    summary.insert("final_T_total_s".into(), trace.t_total[last]);
    summary.insert(
        "eta_tau_median_pT_sqrtHz".into(),
        trace.eta_tau[last].median * 1e3,
    );
    summary.insert("eta_avg_limit_pT_sqrtHz".into(), asym.eta_avg_limit * 1e3);
    summary.insert(
        "ideal_eta_tau_pT_sqrtHz".into(),
        ideal[last] * trace.tau[last].sqrt() * 1e3,
    );
    summary.insert("coverage".into(), coverage);
    summary.insert("alias_failures".into(), aliased as f64);
    Ok(ScenarioOutput {
        tables: vec![
            logs[0].to_table("runlog"),
            ensemble_table(&trace, &ideal, &[]),
            finals,
        ],
        config: cfg,
        summary,
    })
}

/// Fit windows used by the scaling scenario: the ramp `2 ≤ i < j` (the first
/// posterior still spans the whole interval) and the plateau `i ≥ 3j`.
/// Windows shorter than five iterations are skipped.
pub fn scaling_fits(
    records: &[SensitivityRecord],
    sched: &Schedule,
) -> Result<Vec<(String, usize, usize, ScalingFit)>> {
    let j = sched.ramp_len();
    let m = sched.iterations.min(records.len());
    let windows = [
        ("delta_B_ramp", 2, j.saturating_sub(1), Quantity::DeltaB),
        ("eta_T_ramp", 2, j.saturating_sub(1), Quantity::EtaT),
        ("delta_B_plateau", 3 * j, m, Quantity::DeltaB),
    ];
    windows
        .into_iter()
        .filter(|&(_, lo, hi, _)| hi >= lo + 4)
        .map(|(name, lo, hi, q)| Ok((name.to_string(), lo, hi, fit_scaling(records, lo, hi, q)?)))
        .collect()
}

pub fn run_scaling(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    let logs = bayesian_ensemble(&cfg)?;
    let trace = EnsembleTrace::from_logs(&logs)?;
    let params = &cfg.physics;
    let sched = &cfg.schedule;
    let ideal = ideal_uncertainty_trace(sched, params);
    let t1 = sched.first_time();
    let sql_t1: Vec<f64> = trace
        .t_total
        .iter()
        .map(|&t| fmm_uncertainty(t1, t, params))
        .collect();
    let sql_tmax: Vec<f64> = trace
        .t_total
        .iter()
        .map(|&t| fmm_uncertainty(sched.t_max, t, params))
        .collect();
    let records = trace.median_records();
    let fits = scaling_fits(&records, sched)?;

    let mut fit_table = Table::new(
        "fits",
        &[
            "quantity",
            "i_lo",
            "i_hi",
            "exponent",
            "exponent_err",
            "prefactor",
        ],
    );
    let mut summary = BTreeMap::new();
    for (name, lo, hi, f) in &fits {
        fit_table.push(vec![
            name.clone(),
            lo.to_string(),
            hi.to_string(),
            num(f.exponent),
            num(f.exponent_err),
            num(f.prefactor),
        ]);
        summary.insert(format!("{name}_exponent"), f.exponent);
        summary.insert(format!("{name}_exponent_err"), f.exponent_err);
    }
    let beats = (2..records.len()).all(|i| records[i].delta_b < sql_t1[i]);
    summary.insert("beats_sql_T1_after_i2".into(), f64::from(u8::from(beats)));
    let last = records.len() - 1;
    summary.insert(
        "eta_tau_median_pT_sqrtHz".into(),
        records[last].eta_tau * 1e3,
    );
    summary.insert(
        "eta_avg_limit_pT_sqrtHz".into(),
        bayes_asymptotics(sched, params).eta_avg_limit * 1e3,
    );
    summary.insert("final_tau_s".into(), records[last].tau);

    let ens = ensemble_table(
        &trace,
        &ideal,
        &[("sql_T1_nT", sql_t1), ("sql_Tmax_nT", sql_tmax)],
    );
    Ok(ScenarioOutput {
        tables: vec![logs[0].to_table("runlog"), ens, fit_table],
        config: cfg,
        summary,
    })
}

/// Reaction of the adaptive estimate to one field step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResponse {
    pub time: f64,
    pub from: f64,
    pub to: f64,
    /// Iterations after the step until the estimate entered the convergence
    /// band for good (`hold` consecutive iterations); `None` if it never did.
    pub reconverge: Option<usize>,
}

/// Steady state of the frequentist comparator within one field segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentLock {
    pub start: f64,
    pub b_true: f64,
    /// Mean lock reading over the second half of the segment, nT.
    pub b_lock: f64,
    pub alias_order: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub log: RunLog,
    pub steps: Vec<StepResponse>,
    pub lock: Vec<LockStep>,
    pub segments: Vec<SegmentLock>,
}

impl TrackRun {
    pub fn lock_aliased(&self) -> bool {
        self.segments.iter().any(|s| s.alias_order != 0)
    }
}

fn reconvergence(rows: &[RunRow], track: &TrackConfig) -> Option<usize> {
    let inside = |r: &RunRow| {
        r.delta_b <= track.max_delta_b
            && (r.b_est - r.b_true).abs() < track.converge_sigmas * r.delta_b
    };
    let mut streak = 0;
    for (k, r) in rows.iter().enumerate() {
        if inside(r) {
            streak += 1;
            if streak == track.hold {
                return Some(k + 2 - track.hold);
            }
        } else {
            streak = 0;
        }
    }
    None
}

pub fn track_run(cfg: &ScenarioConfig, run_index: u64) -> Result<TrackRun> {
    let profile = cfg.field_profile();
    if profile.segments().len() < 2 {
        return Err(Error::InvalidConfiguration(
            "tracking needs a field profile with at least 2 segments".into(),
        ));
    }
    check_interval(cfg, &profile)?;
    let params = &cfg.physics;
    let m_b = cfg.schedule.iterations;
    let mut rng = run_rng(cfg.seed, run_index);
    let mut rows = Vec::with_capacity(cfg.track.estimates * m_b);
    for e in 0..cfg.track.estimates {
        let start = (e * m_b) as f64 * params.cycle_period;
        rows.extend(adaptive_estimate(
            cfg,
            &profile,
            start,
            e * m_b + 1,
            &mut rng,
        )?);
    }
    let end_wall = (cfg.track.estimates * m_b) as f64 * params.cycle_period;

    let segs = profile.segments();
    let steps = segs
        .windows(2)
        .filter(|w| w[1].0 < end_wall)
        .map(|w| {
            let first = rows.partition_point(|r| r.wall_time < w[1].0);
            StepResponse {
                time: w[1].0,
                from: w[0].1,
                to: w[1].1,
                reconverge: reconvergence(&rows[first..], &cfg.track),
            }
        })
        .collect();

    // frequentist comparator: interrogation time T_max, starting locked
    let t_r = cfg.schedule.t_max;
    let b0 = cfg
        .lock
        .initial_field
        .unwrap_or_else(|| profile.value_at(0.0));
    let state = LockState::at_field(b0, cfg.lock.loop_gain, params)?;
    let n_lock = (end_wall / (2.0 * params.cycle_period)).floor() as usize;
    let lock = run_lock(state, t_r, n_lock, &profile, 0.0, params, &mut rng)?;
    let segments = segs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 < end_wall)
        .map(|(k, &(start, b))| {
            let stop = segs.get(k + 1).map_or(end_wall, |s| s.0).min(end_wall);
            let mid = 0.5 * (start + stop);
            let readings: Vec<f64> = lock
                .iter()
                .filter(|s| s.plus.wall_time >= mid && s.plus.wall_time < stop)
                .map(|s| s.b_est)
                .collect();
            let b_lock = readings.iter().sum::<f64>() / readings.len().max(1) as f64;
            SegmentLock {
                start,
                b_true: b,
                b_lock,
                alias_order: alias_order(b_lock, b, t_r, params),
            }
        })
        .collect();
    Ok(TrackRun {
        log: RunLog {
            seed: cfg.seed,
            run_index,
            rows,
        },
        steps,
        lock,
        segments,
    })
}

fn lock_table(
    lock: &[LockStep],
    t_r: f64,
    profile: &FieldProfile,
    params: &PhysicsParams,
) -> Table {
    let mut t = Table::new(
        "lock",
        &[
            "measurement",
            "wall_time_s",
            "p_minus",
            "p_plus",
            "error_signal",
            "B_est_nT",
            "B_true_nT",
            "alias_order",
            "lock_lost",
        ],
    );
    for (k, s) in lock.iter().enumerate() {
        let b = profile.value_at(s.plus.wall_time);
        t.push(vec![
            (k + 1).to_string(),
            num(s.plus.wall_time),
            num(s.minus.p_e),
            num(s.plus.p_e),
            num(s.error_signal),
            num(s.b_est),
            num(b),
            alias_order(s.b_est, b, t_r, params).to_string(),
            u8::from(s.state.lock_lost()).to_string(),
        ]);
    }
    t
}

pub fn run_track(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let runs: Vec<TrackRun> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|k| track_run(&cfg, k))
        .collect::<Result<_>>()?;
    let profile = cfg.field_profile();
    let params = &cfg.physics;
    let t_max = cfg.schedule.t_max;

    let mut steps = Table::new(
        "track",
        &[
            "run",
            "step",
            "time_s",
            "B_before_nT",
            "B_after_nT",
            "reconverge_iterations",
        ],
    );
    let mut segs = Table::new(
        "lock_segments",
        &[
            "run",
            "segment",
            "start_s",
            "B_true_nT",
            "B_lock_nT",
            "alias_order",
        ],
    );
    let mut worst = 0usize;
    let mut missed = 0usize;
    let mut aliased_runs = 0usize;
    for run in &runs {
        for (k, s) in run.steps.iter().enumerate() {
            steps.push(vec![
                run.log.run_index.to_string(),
                (k + 1).to_string(),
                num(s.time),
                num(s.from),
                num(s.to),
                opt_num(s.reconverge),
            ]);
            match s.reconverge {
                Some(n) => worst = worst.max(n),
                None => missed += 1,
            }
        }
        for (k, s) in run.segments.iter().enumerate() {
            segs.push(vec![
                run.log.run_index.to_string(),
                k.to_string(),
                num(s.start),
                num(s.b_true),
                num(s.b_lock),
                s.alias_order.to_string(),
            ]);
        }
        aliased_runs += usize::from(run.lock_aliased());
    }

    let lock = lock_table(&runs[0].lock, t_max, &profile, params);

    let mut summary = BTreeMap::new();
    summary.insert("max_reconverge_iterations".into(), worst as f64);
    summary.insert("steps_not_reconverged".into(), missed as f64);
    summary.insert(
        "frequentist_aliased_fraction".into(),
        aliased_runs as f64 / runs.len() as f64,
    );
    Ok(ScenarioOutput {
        tables: vec![runs[0].log.to_table("runlog"), steps, lock, segs],
        config: cfg,
        summary,
    })
}

/// Ensemble uncertainty of the lock's running-mean estimate at one total
/// interrogation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockCheckpoint {
    pub measurements: usize,
    pub t_total: f64,
    pub tau: f64,
    /// Standard deviation of the running mean across runs, nT.
    pub delta_b_mc: f64,
    /// Median over runs of the shot-noise uncertainty propagated from the
    /// measured excitation fractions, nT.
    pub delta_b_propagated: f64,
    /// `1/(π|Δm_F γ|√N_eff√(T_R T))`, nT.
    pub delta_b_closed: f64,
}

/// Runs `runs` independent noisy locks at `t_r` on the configured field and
/// evaluates the running-mean uncertainty after each of `measurements`.
pub fn lock_ensemble(
    cfg: &ScenarioConfig,
    t_r: f64,
    measurements: &[usize],
    runs: usize,
) -> Result<(Vec<Vec<LockStep>>, Vec<LockCheckpoint>)> {
    let params = &cfg.physics;
    let profile = cfg.field_profile();
    let b0 = cfg
        .lock
        .initial_field
        .unwrap_or_else(|| profile.value_at(0.0));
    let n_max = measurements.iter().copied().max().unwrap_or(1);
    let traces: Vec<Vec<LockStep>> = (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = run_rng(cfg.seed, k);
            let state = LockState::at_field(b0, cfg.lock.loop_gain, params)?;
            run_lock(state, t_r, n_max, &profile, 0.0, params, &mut rng)
        })
        .collect::<Result<_>>()?;
    let checkpoints = measurements
        .iter()
        .map(|&m| {
            let means: Vec<f64> = traces
                .iter()
                .map(|tr| tr[..m].iter().map(|s| s.b_est).sum::<f64>() / m as f64)
                .collect();
            let propagated: Vec<f64> = traces
                .iter()
                .map(|tr| {
                    tr[..m]
                        .iter()
                        .map(|s| s.propagated_sigma(t_r, params).powi(2))
                        .sum::<f64>()
                        .sqrt()
                        / m as f64
                })
                .collect();
            let mc = if runs >= 2 {
                let mean = means.iter().sum::<f64>() / runs as f64;
                (means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let t_total = 2.0 * m as f64 * t_r;
            LockCheckpoint {
                measurements: m,
                t_total,
                tau: 2.0 * m as f64 * params.cycle_period,
                delta_b_mc: mc,
                delta_b_propagated: median(&propagated),
                delta_b_closed: fmm_uncertainty(t_r, t_total, params),
            }
        })
        .collect();
    Ok((traces, checkpoints))
}

fn frequentist_runlog(cfg: &ScenarioConfig, lock: &[LockStep], t_r: f64, run_index: u64) -> RunLog {
    let params = &cfg.physics;
    let profile = cfg.field_profile();
    let mut sum_b = 0.0;
    let mut sum_var = 0.0;
    let rows = lock
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let n = (k + 1) as f64;
            sum_b += s.b_est;
            sum_var += s.propagated_sigma(t_r, params).powi(2);
            let delta_b = sum_var.sqrt() / n;
            let t_total = 2.0 * n * t_r;
            let tau = 2.0 * n * params.cycle_period;
            RunRow {
                iteration: k + 1,
                t_i: t_r,
                phi_c: 0.0,
                p_e: 0.5 * (s.minus.p_e + s.plus.p_e),
                n_eff: s.plus.n_eff,
                b_est: sum_b / n,
                delta_b,
                t_total,
                tau,
                eta_t: delta_b * t_total.sqrt(),
                eta_tau: delta_b * tau.sqrt(),
                wall_time: s.plus.wall_time,
                b_true: profile.value_at(s.plus.wall_time),
            }
        })
        .collect();
    RunLog {
        seed: cfg.seed,
        run_index,
        rows,
    }
}

pub fn run_frequentist(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let params = &cfg.physics;
    let t_r = cfg.lock.t_r;
    let ms: Vec<usize> = cfg
        .lock
        .checkpoints
        .iter()
        .map(|&t| cfg.lock.measurements_for(t))
        .collect();
    let (traces, checkpoints) = lock_ensemble(&cfg, t_r, &ms, cfg.runs)?;
    let profile = cfg.field_profile();

    let lock = lock_table(&traces[0], t_r, &profile, params);
    let mut aliased_runs = 0usize;
    let mut lost_runs = 0usize;
    for tr in &traces {
        let last = tr.last().expect("at least one measurement");
        let b = profile.value_at(last.plus.wall_time);
        aliased_runs += usize::from(alias_order(last.b_est, b, t_r, params) != 0);
        lost_runs += usize::from(last.state.lock_lost());
    }

    let mut mc = Table::new(
        "mc",
        &[
            "measurements",
            "T_total_s",
            "tau_s",
            "delta_B_mc_nT",
            "delta_B_propagated_nT",
            "delta_B_closed_nT",
            "mc_over_closed",
        ],
    );
    let mut summary = BTreeMap::new();
    for c in &checkpoints {
        mc.push(vec![
            c.measurements.to_string(),
            num(c.t_total),
            num(c.tau),
            num(c.delta_b_mc),
            num(c.delta_b_propagated),
            num(c.delta_b_closed),
            num(c.delta_b_mc / c.delta_b_closed),
        ]);
        summary.insert(
            format!("mc_over_closed_T{}", num(c.t_total)),
            c.delta_b_mc / c.delta_b_closed,
        );
    }
    summary.insert(
        "aliased_fraction".into(),
        aliased_runs as f64 / traces.len() as f64,
    );
    summary.insert(
        "lock_lost_fraction".into(),
        lost_runs as f64 / traces.len() as f64,
    );
    summary.insert(
        "eta_avg_closed_pT_sqrtHz".into(),
        fmm_sensitivity_avg(t_r, params) * 1e3,
    );
    Ok(ScenarioOutput {
        tables: vec![
            frequentist_runlog(&cfg, &traces[0], t_r, 0).to_table("runlog"),
            lock,
            mc,
        ],
        config: cfg,
        summary,
    })
}

pub fn run_compare(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let params = &cfg.physics;
    let sched = &cfg.schedule;
    let asym = bayes_asymptotics(sched, params);
    let m_lock = ((sched.iterations as f64 / 2.0).floor() as usize).max(1);

    let mut table = Table::new(
        "table1",
        &[
            "method",
            "T_first_s",
            "dynamic_range_nT",
            "eta_closed_pT_sqrtHz",
            "eta_mc_pT_sqrtHz",
        ],
    );
    let mut summary = BTreeMap::new();
    for (label, t_r) in [
        ("frequentist_T1", sched.t_min),
        ("frequentist_Tmax", sched.t_max),
    ] {
        let (_, cps) = lock_ensemble(&cfg, t_r, &[m_lock], cfg.runs)?;
        let c = cps[0];
        let delta = if c.delta_b_mc.is_finite() {
            c.delta_b_mc
        } else {
            c.delta_b_propagated
        };
        let range = params.dynamic_range(t_r);
        let closed = fmm_sensitivity_avg(t_r, params);
        table.push(vec![
            label.into(),
            num(t_r),
            num(range),
            num(closed * 1e3),
            num(delta * c.tau.sqrt() * 1e3),
        ]);
        summary.insert(format!("{label}_dynamic_range_nT"), range);
        summary.insert(format!("{label}_eta_closed_pT_sqrtHz"), closed * 1e3);
    }

    let mut points = Table::new(
        "bayes_points",
        &[
            "T_first_s",
            "ramp_len",
            "dynamic_range_nT",
            "eta_closed_pT_sqrtHz",
            "eta_mc_pT_sqrtHz",
        ],
    );
    let mut mc_etas = Vec::new();
    for &t_first in &cfg.compare.first_times {
        let mut sub = cfg.clone();
        sub.schedule.t_min = t_first;
        sub.scenario = ScenarioKind::Bayesian;
        let logs = bayesian_ensemble(&sub)?;
        let finals: Vec<f64> = logs
            .iter()
            .map(|l| l.last().map(|r| r.eta_tau))
            .collect::<Result<_>>()?;
        let eta = median(&finals);
        mc_etas.push(eta);
        points.push(vec![
            num(sub.schedule.first_time()),
            sub.schedule.ramp_len().to_string(),
            num(params.dynamic_range(sub.schedule.first_time())),
            num(asym.eta_avg_limit * 1e3),
            num(eta * 1e3),
        ]);
    }
    let bayes_range = params.dynamic_range(sched.first_time());
    table.push(vec![
        "bayesian".into(),
        num(sched.first_time()),
        num(bayes_range),
        num(asym.eta_avg_limit * 1e3),
        num(cfg
            .compare
            .first_times
            .iter()
            .position(|t| (t - sched.t_min).abs() < 1e-12)
            .map_or(f64::NAN, |k| mc_etas[k] * 1e3)),
    ]);
    summary.insert("bayesian_dynamic_range_nT".into(), bayes_range);
    summary.insert(
        "bayesian_eta_closed_pT_sqrtHz".into(),
        asym.eta_avg_limit * 1e3,
    );
    if !mc_etas.is_empty() {
        let lo = mc_etas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mc_etas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.insert("bayesian_eta_spread".into(), (hi - lo) / median(&mc_etas));
    }

    let mut sweep = Table::new(
        "sweep",
        &["T_R_s", "dynamic_range_nT", "eta_closed_pT_sqrtHz"],
    );
    let c = &cfg.compare;
    let ratio = (c.sweep_max / c.sweep_min).ln();
    for k in 0..c.sweep_points {
        let t = c.sweep_min * (ratio * k as f64 / (c.sweep_points - 1) as f64).exp();
        sweep.push(vec![
            num(t),
            num(params.dynamic_range(t)),
            num(fmm_sensitivity_avg(t, params) * 1e3),
        ]);
    }
    Ok(ScenarioOutput {
        tables: vec![table, points, sweep],
        config: cfg,
        summary,
    })
}

pub fn run_coherence(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    let params = &cfg.physics;
    let c = &cfg.coherence;
    let b = cfg.field_profile().value_at(0.0);
    let times: Vec<f64> = (0..c.samples)
        .map(|k| c.t_min + (c.t_max - c.t_min) * k as f64 / (c.samples - 1) as f64)
        .collect();
    let fringes: Vec<Vec<(f64, f64)>> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = run_rng(cfg.seed, k);
            times
                .iter()
                .map(|&t| {
                    let ramsey = RamseyConfig::new(t, 0.0, c.delta_f);
                    let s = if c.shot_noise {
                        sample_transmitted_signal(params, &ramsey, b, &mut rng)?
                    } else {
                        transmitted_signal(params, &ramsey, b)
                    };
                    Ok((t, s))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let fits: Vec<CoherenceFit> = fringes
        .par_iter()
        .map(|f| fit_coherence(f, params, c.delta_f))
        .collect::<Result<_>>()?;

    let mut fringe = Table::new("fringe", &["T_R_s", "signal", "noiseless_signal"]);
    for &(t, s) in &fringes[0] {
        let clean = transmitted_signal(params, &RamseyConfig::new(t, 0.0, c.delta_f), b);
        fringe.push(vec![num(t), num(s), num(clean)]);
    }
    let mut fit = Table::new(
        "fit",
        &[
            "run",
            "T_chi_s",
            "kappa_per_s2",
            "kappa_err_per_s2",
            "beat_Hz",
            "residual_rms",
        ],
    );
    for (k, f) in fits.iter().enumerate() {
        fit.push(vec![
            k.to_string(),
            num(f.t_chi),
            num(f.kappa),
            num(f.kappa_err),
            num(f.beat),
            num(f.residual_rms),
        ]);
    }
    let t_chis: Vec<f64> = fits.iter().map(|f| f.t_chi).collect();
    let mut summary = BTreeMap::new();
    summary.insert("T_chi_median_s".into(), median(&t_chis));
    summary.insert(
        "T_chi_max_rel_error".into(),
        t_chis
            .iter()
            .map(|t| (t / params.coherence_time - 1.0).abs())
            .fold(0.0, f64::max),
    );
    Ok(ScenarioOutput {
        tables: vec![fringe, fit],
        config: cfg,
        summary,
    })
}

/// Dispatches on `cfg.scenario`.
pub fn run(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    match cfg.scenario {
        ScenarioKind::Coherence => run_coherence(cfg),
        ScenarioKind::Frequentist => run_frequentist(cfg),
        ScenarioKind::Bayesian => run_bayesian(cfg),
        ScenarioKind::Track => run_track(cfg),
        ScenarioKind::Scaling => run_scaling(cfg),
        ScenarioKind::Compare => run_compare(cfg),
    }
}
