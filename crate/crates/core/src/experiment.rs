//! Monte Carlo experiments: a JSON config describing a scenario and detector
//! settings, seeded trials under both hypotheses, and CSV/JSON output.
//!
//! Trial `t` under hypothesis `h` draws its samples from
//! [`trial_rng`]`(scenario.seed, t, h)`; the subspaces themselves come from
//! `scenario.seed` and are shared by every trial. Records are emitted in trial
//! order (present before absent), so output does not depend on the thread
//! count.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{run_stream, Decision, DecisionKind, DetectorConfig, TrajectoryPoint};
use crate::error::{Result, VcError};
use crate::io::push_trajectory_fields;
use crate::scenario::{make_scenario, trial_rng, Hypothesis, Scenario, ScenarioConfig};
use crate::theory::{median, per_m_quantiles, tau, QuantileRow};

pub const PRESETS: &[(&str, &str)] = &[
    ("fig1_full", include_str!("../configs/fig1_full.json")),
    ("fig1_desk", include_str!("../configs/fig1_desk.json")),
];

pub const RECORD_HEADER: &str = "trial_id,hypothesis,i,T,inv_T,k_i,decision";

fn default_true() -> bool {
    true
}
fn default_gamma() -> f64 {
    2.0
}
fn default_t_div() -> f64 {
    1e6
}
fn default_stall_epsilon() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    5
}
fn default_zero_tol() -> f64 {
    1e-8
}
fn default_trials() -> usize {
    1
}

/// Detector settings of an experiment; the target basis comes from the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Pass the scenario's noise variance to the rank rule.
    #[serde(default = "default_true")]
    pub use_noise_hint: bool,
    #[serde(default = "default_gamma")]
    pub rank_gap_factor: f64,
    #[serde(default = "default_t_div")]
    pub divergence_threshold: f64,
    #[serde(default = "default_stall_epsilon")]
    pub stall_epsilon: f64,
    #[serde(default = "default_patience")]
    pub stall_patience: usize,
    #[serde(default = "default_zero_tol")]
    pub zero_volume_tol: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            use_noise_hint: true,
            rank_gap_factor: default_gamma(),
            divergence_threshold: default_t_div(),
            stall_epsilon: default_stall_epsilon(),
            stall_patience: default_patience(),
            zero_volume_tol: default_zero_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    /// `scenario.seed` is the master seed; `scenario.hypothesis` is ignored.
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub detector: DetectorParams,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Defaults to `4 (d1 + d2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
    /// Worker threads; defaults to the number of available cores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    /// Trajectory CSV; the summary goes next to it as `<stem>.summary.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A bundled preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_json(text).expect("bundled preset parses"))
    }

    /// Loads `spec` as a preset name, falling back to a file path.
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(spec) {
            return Ok(cfg);
        }
        Self::from_json(&fs::read_to_string(spec)?)
    }

    pub fn max_samples(&self) -> usize {
        self.max_samples.unwrap_or(4 * (self.scenario.d1 + self.scenario.d2))
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(VcError::invalid("trials must be >= 1"));
        }
        if self.max_samples == Some(0) {
            return Err(VcError::invalid("max_samples must be >= 1"));
        }
        if self.parallelism == Some(0) {
            return Err(VcError::invalid("parallelism must be >= 1"));
        }
        Ok(())
    }

    /// Detector configuration for `sc` (whose target basis it uses).
    pub fn detector_config(&self, sc: &Scenario) -> Result<DetectorConfig> {
        let p = &self.detector;
        let cfg = DetectorConfig {
            noise_variance_hint: p.use_noise_hint.then(|| sc.noise_variance()),
            rank_gap_factor: p.rank_gap_factor,
            divergence_threshold: p.divergence_threshold,
            stall_epsilon: p.stall_epsilon,
            stall_patience: p.stall_patience,
            max_samples: self.max_samples(),
            zero_volume_tol: p.zero_volume_tol,
            ..DetectorConfig::new(sc.target_basis.clone())
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The first `m` samples of one trial.
pub fn trial_samples(sc: &Scenario, trial_id: u64, hypothesis: Hypothesis, m: usize) -> Vec<DVector<f64>> {
    let sc = sc.with_hypothesis(hypothesis);
    sc.samples(trial_rng(sc.config.seed, trial_id, hypothesis))
        .take(m)
        .map(|s| s.y)
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial_id: u64,
    pub hypothesis: Hypothesis,
    pub decision: Decision,
    pub trajectory: Vec<TrajectoryPoint>,
}

impl TrialResult {
    pub fn final_inv_t(&self) -> Option<f64> {
        self.trajectory.last().map(|p| p.inv_t)
    }
}

pub fn run_trial(sc: &Scenario, cfg: &DetectorConfig, trial_id: u64, hypothesis: Hypothesis) -> Result<TrialResult> {
    let sc = sc.with_hypothesis(hypothesis);
    let samples = sc
        .samples(trial_rng(sc.config.seed, trial_id, hypothesis))
        .take(cfg.max_samples);
    let outcome = run_stream(cfg, samples)?;
    Ok(TrialResult {
        trial_id,
        hypothesis,
        decision: outcome.decision,
        trajectory: outcome.trajectory,
    })
}

pub struct SimulationOutput {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    /// Ordered by trial, present before absent.
    pub trials: Vec<TrialResult>,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let sc = make_scenario(&cfg.scenario)?;
    let det = cfg.detector_config(&sc)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism())
        .build()
        .map_err(|e| VcError::Usage(format!("cannot start worker pool: {e}")))?;
    let per_trial: Vec<[TrialResult; 2]> = pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                Ok([
                    run_trial(&sc, &det, t, Hypothesis::Present)?,
                    run_trial(&sc, &det, t, Hypothesis::Absent)?,
                ])
            })
            .collect::<Result<_>>()
    })?;
    Ok(SimulationOutput {
        config: cfg.clone(),
        scenario: sc,
        trials: per_trial.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub target_present: usize,
    pub target_absent: usize,
    pub undecided: usize,
}

impl DecisionCounts {
    fn add(&mut self, kind: DecisionKind) {
        match kind {
            DecisionKind::TargetPresent => self.target_present += 1,
            DecisionKind::TargetAbsent => self.target_absent += 1,
            DecisionKind::Undecided => self.undecided += 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub trials: usize,
    pub decisions: DecisionCounts,
    /// Median over trials of the last recorded `1/T`.
    pub final_inv_t_median: f64,
    pub per_m: Vec<QuantileRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub name: String,
    pub scenario: ScenarioConfig,
    pub noise_variance: f64,
    pub max_samples: usize,
    /// `None` when the subspaces nearly intersect.
    pub tau: Option<f64>,
    pub present: HypothesisSummary,
    pub absent: HypothesisSummary,
}

impl SimulationOutput {
    pub fn by_hypothesis(&self, h: Hypothesis) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(move |t| t.hypothesis == h)
    }

    fn summarize(&self, h: Hypothesis) -> HypothesisSummary {
        let mut decisions = DecisionCounts::default();
        let mut finals = Vec::new();
        for t in self.by_hypothesis(h) {
            decisions.add(t.decision.kind);
            finals.extend(t.final_inv_t());
        }
        HypothesisSummary {
            trials: self.by_hypothesis(h).count(),
            decisions,
            final_inv_t_median: median(&finals),
            per_m: per_m_quantiles(self.by_hypothesis(h).map(|t| t.trajectory.as_slice())),
        }
    }

    pub fn summary(&self) -> SimulationSummary {
        SimulationSummary {
            name: self.config.name.clone(),
            scenario: self.config.scenario.clone(),
            noise_variance: self.scenario.noise_variance(),
            max_samples: self.config.max_samples(),
            tau: tau(&self.scenario.target_basis, &self.scenario.clutter_basis).ok(),
            present: self.summarize(Hypothesis::Present),
            absent: self.summarize(Hypothesis::Absent),
        }
    }

    /// Trajectory records as CSV text.
    pub fn csv(&self) -> String {
        let rows: usize = self.trials.iter().map(|t| t.trajectory.len()).sum();
        let mut out = String::with_capacity(80 * (rows + 1));
        out.push_str(RECORD_HEADER);
        out.push('\n');
        for t in &self.trials {
            for p in &t.trajectory {
                let _ = write!(out, "{},{},{},", t.trial_id, t.hypothesis.as_str(), p.i);
                push_trajectory_fields(&mut out, p, t.decision);
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.csv().as_bytes())?;
        Ok(())
    }

    /// Writes the CSV to `path` and the summary to [`summary_path`]`(path)`.
    pub fn write_files(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.csv())?;
        let summary_path = summary_path(path);
        let mut text = serde_json::to_string_pretty(&self.summary())?;
        text.push('\n');
        fs::write(&summary_path, text)?;
        Ok(summary_path)
    }
}

/// `out.csv` becomes `out.summary.json`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}
