//! The volume-correlation detector.
//!
//! Two procedures live here:
//!
//! - [`noiseless_breakpoint`]: for noise-free samples. The volume of the
//!   samples stacked with the target basis first vanishes at sample `d1 + 1`
//!   under either hypothesis; at that point the volume of the samples alone
//!   is non-zero exactly when a target component is present.
//! - [`Detector`]: the streaming detector for noisy samples. Each sample
//!   updates the running covariance, the leading eigenvectors estimate the
//!   signal(-plus-clutter) subspace, and the test statistic
//!   `T = Vol_{k+d2}([Q_hat, Q_S])` is tracked. `1/T` diverges when the
//!   target is present and settles at `1/tau` when it is absent.

use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcError};
use crate::geometry::{self, orthonormalize, stacked_log_volume, SubspaceBasis, VolumeChain};

/// `1/T` is reported as at most this value (T = 0 maps here).
pub const INV_T_CAP: f64 = 1e308;

/// Eigenvalues below this fraction of the largest are numerically zero.
pub const EIGEN_RANK_FLOOR: f64 = 1e-12;

/// Sample budget used when the clutter dimension is unknown.
pub const DEFAULT_MAX_SAMPLES: usize = 512;

// Smallest retained-eigenvalue ratio for which lifted Gram eigenvectors are
// used without re-orthonormalization.
const LIFT_CONDITION_LIMIT: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct DetectorConfig {
    /// Known target basis `Q_S`.
    pub target_basis: SubspaceBasis,
    /// `sigma^2`, when known. Selects the noise-floor rank rule.
    pub noise_variance_hint: Option<f64>,
    /// Eigenvalues above `gamma * sigma^2` count as signal.
    pub rank_gap_factor: f64,
    /// Declare the target present once `1/T` exceeds this.
    pub divergence_threshold: f64,
    /// Relative change of `1/T` below which a step counts as stalled.
    pub stall_epsilon: f64,
    /// Consecutive stalled steps needed to declare the target absent.
    pub stall_patience: usize,
    pub max_samples: usize,
    pub zero_volume_tol: f64,
}

impl DetectorConfig {
    pub fn new(target_basis: SubspaceBasis) -> Self {
        Self {
            target_basis,
            noise_variance_hint: None,
            rank_gap_factor: 2.0,
            divergence_threshold: 1e6,
            stall_epsilon: 1e-3,
            stall_patience: 5,
            max_samples: DEFAULT_MAX_SAMPLES,
            zero_volume_tol: 1e-8,
        }
    }

    /// Defaults for a known clutter dimension: budget of `4 (d1 + d2)` samples.
    pub fn for_clutter_dim(target_basis: SubspaceBasis, d1: usize) -> Self {
        let d2 = target_basis.dim();
        Self {
            max_samples: 4 * (d1 + d2),
            ..Self::new(target_basis)
        }
    }

    pub fn with_noise_variance(mut self, sigma2: f64) -> Self {
        self.noise_variance_hint = Some(sigma2);
        self
    }

    pub fn with_max_samples(mut self, m: usize) -> Self {
        self.max_samples = m;
        self
    }

    /// Same estimator, but never stops: no divergence or stall decision.
    pub fn tracing(mut self) -> Self {
        self.divergence_threshold = f64::INFINITY;
        self.stall_patience = usize::MAX;
        self
    }

    pub fn ambient_dim(&self) -> usize {
        self.target_basis.ambient_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_basis.dim() == 0 {
            return Err(VcError::invalid("target basis must have dimension >= 1"));
        }
        if let Some(s2) = self.noise_variance_hint {
            if !(s2 >= 0.0 && s2.is_finite()) {
                return Err(VcError::invalid("noise variance hint must be finite and >= 0"));
            }
        }
        if !(self.rank_gap_factor > 0.0) {
            return Err(VcError::invalid("rank gap factor must be > 0"));
        }
        if !(self.divergence_threshold > 1.0) {
            return Err(VcError::invalid("divergence threshold must be > 1"));
        }
        if !(self.stall_epsilon > 0.0) {
            return Err(VcError::invalid("stall epsilon must be > 0"));
        }
        if !(self.zero_volume_tol > 0.0) {
            return Err(VcError::invalid("zero-volume tolerance must be > 0"));
        }
        if self.stall_patience == 0 || self.max_samples == 0 {
            return Err(VcError::invalid("stall patience and max samples must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionKind {
    TargetPresent,
    TargetAbsent,
    Undecided,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::TargetPresent => "TargetPresent",
            DecisionKind::TargetAbsent => "TargetAbsent",
            DecisionKind::Undecided => "Undecided",
        }
    }
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of the detector; `decided_at` is set iff the kind is not `Undecided`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub decided_at: Option<usize>,
}

impl Decision {
    pub const UNDECIDED: Decision = Decision {
        kind: DecisionKind::Undecided,
        decided_at: None,
    };

    pub fn present(at: usize) -> Self {
        Self {
            kind: DecisionKind::TargetPresent,
            decided_at: Some(at),
        }
    }

    pub fn absent(at: usize) -> Self {
        Self {
            kind: DecisionKind::TargetAbsent,
            decided_at: Some(at),
        }
    }

    pub fn is_decided(&self) -> bool {
        self.kind != DecisionKind::Undecided
    }
}

/// Test statistic after sample `i`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub i: usize,
    pub t: f64,
    pub inv_t: f64,
    pub log_t: f64,
    /// Estimated signal rank `k_i`.
    pub rank: usize,
}

/// Rule mapping a descending spectrum to a signal-subspace dimension.
pub trait RankEstimator: fmt::Debug + Send + Sync {
    fn estimate(&self, eigenvalues: &[f64], sample_count: usize) -> Result<usize>;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankRule {
    /// Count eigenvalues above `gamma * sigma^2`.
    NoiseFloor { noise_variance: f64, gamma: f64 },
    /// Cut at the largest ratio between consecutive eigenvalues.
    GapRatio,
}

impl RankRule {
    pub fn from_config(cfg: &DetectorConfig) -> Self {
        match cfg.noise_variance_hint {
            Some(noise_variance) => RankRule::NoiseFloor {
                noise_variance,
                gamma: cfg.rank_gap_factor,
            },
            None => RankRule::GapRatio,
        }
    }
}

impl RankEstimator for RankRule {
    fn estimate(&self, eigenvalues: &[f64], sample_count: usize) -> Result<usize> {
        if eigenvalues.is_empty() {
            return Err(VcError::invalid("rank estimation needs at least one eigenvalue"));
        }
        let n = eigenvalues.len();
        let cap = sample_count.min(n - 1);
        let top = eigenvalues[0].max(0.0);
        let floor = EIGEN_RANK_FLOOR * top;
        let k = match *self {
            RankRule::NoiseFloor { noise_variance, gamma } => {
                let threshold = (gamma * noise_variance).max(floor);
                eigenvalues.iter().take_while(|&&v| v > threshold).count()
            }
            RankRule::GapRatio => {
                let last = sample_count.saturating_sub(1).min(n - 1);
                let mut best = (0usize, f64::NEG_INFINITY);
                for j in 1..=last {
                    let (hi, lo) = (eigenvalues[j - 1], eigenvalues[j]);
                    let ratio = if hi <= floor {
                        1.0
                    } else if lo <= floor {
                        f64::INFINITY
                    } else {
                        hi / lo
                    };
                    if ratio >= best.1 {
                        best = (j, ratio);
                    }
                }
                best.0
            }
        };
        Ok(k.min(cap))
    }
}

/// Signal rank of a descending spectrum under the configured rule.
pub fn estimate_rank(eigenvalues: &[f64], sample_count: usize, cfg: &DetectorConfig) -> Result<usize> {
    RankRule::from_config(cfg).estimate(eigenvalues, sample_count)
}

/// Decision rule applied to a trajectory.
///
/// `1/T > T_div` means present. Otherwise, if the last `stall_patience`
/// steps each changed `1/T` by less than `stall_epsilon` relative to the
/// current value, the target is absent. The sample budget is enforced by the
/// caller.
pub fn decide(trajectory: &[TrajectoryPoint], cfg: &DetectorConfig) -> Decision {
    let Some(last) = trajectory.last() else {
        return Decision::UNDECIDED;
    };
    if last.inv_t > cfg.divergence_threshold {
        return Decision::present(last.i);
    }
    let stalled = trajectory
        .windows(2)
        .rev()
        .take_while(|w| (w[1].inv_t - w[0].inv_t).abs() < cfg.stall_epsilon * w[1].inv_t)
        .take(cfg.stall_patience)
        .count();
    if stalled >= cfg.stall_patience {
        return Decision::absent(last.i);
    }
    Decision::UNDECIDED
}

/// Streaming detector state.
#[derive(Clone, Debug)]
pub struct Detector {
    config: DetectorConfig,
    rank_rule: Arc<dyn RankEstimator>,
    sample_count: usize,
    moments: Moments,
    signal_basis: SubspaceBasis,
    eigenvalues: Vec<f64>,
    trajectory: Vec<TrajectoryPoint>,
    decision: Decision,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        let rule = RankRule::from_config(&config);
        Self::with_rank_estimator(config, Arc::new(rule))
    }

    pub fn with_rank_estimator(config: DetectorConfig, rank_rule: Arc<dyn RankEstimator>) -> Result<Self> {
        config.validate()?;
        let n = config.ambient_dim();
        Ok(Self {
            rank_rule,
            sample_count: 0,
            moments: Moments::Factored {
                samples: DMatrix::zeros(n, 0),
                gram: DMatrix::zeros(0, 0),
            },
            signal_basis: SubspaceBasis::empty(n),
            eigenvalues: Vec::new(),
            trajectory: Vec::new(),
            decision: Decision::UNDECIDED,
            config,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Running sample covariance `R_hat^(i)`.
    pub fn covariance(&self) -> DMatrix<f64> {
        match &self.moments {
            Moments::Factored { samples, .. } => {
                let n = self.config.ambient_dim();
                if self.sample_count == 0 {
                    DMatrix::zeros(n, n)
                } else {
                    samples * samples.transpose() / self.sample_count as f64
                }
            }
            Moments::Dense(r) => r.clone(),
        }
    }

    pub fn estimated_rank(&self) -> usize {
        self.signal_basis.dim()
    }

    pub fn signal_basis(&self) -> &SubspaceBasis {
        &self.signal_basis
    }

    /// Spectrum of the current covariance, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trajectory(&self) -> &[TrajectoryPoint] {
        &self.trajectory
    }

    pub fn decision(&self) -> Decision {
        self.decision
    }

    pub fn budget_exhausted(&self) -> bool {
        self.sample_count >= self.config.max_samples
    }

    /// Processes one sample and returns the decision after it.
    pub fn ingest(&mut self, y: &DVector<f64>) -> Result<Decision> {
        if self.decision.is_decided() {
            return Err(VcError::Usage(format!(
                "detector already decided {} at sample {}",
                self.decision.kind,
                self.decision.decided_at.unwrap_or(0)
            )));
        }
        let n = self.config.ambient_dim();
        if y.len() != n {
            return Err(VcError::DimensionMismatch {
                what: "sample length",
                expected: n,
                got: y.len(),
            });
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            return Err(VcError::NonFinite { row: pos, col: 0 });
        }

        self.sample_count += 1;
        self.update_moments(y);

        let spectrum = self.spectrum()?;
        let k = self.rank_rule.estimate(spectrum.values(), self.sample_count)?;
        self.signal_basis = self.leading_basis(&spectrum, k)?;
        self.eigenvalues = spectrum.into_values();

        let log_t = stacked_log_volume(&self.signal_basis, &self.config.target_basis)?;
        let t = log_t.exp();
        let inv_t = if log_t == f64::NEG_INFINITY {
            INV_T_CAP
        } else {
            (-log_t).exp().min(INV_T_CAP)
        };
        self.trajectory.push(TrajectoryPoint {
            i: self.sample_count,
            t,
            inv_t,
            log_t,
            rank: self.signal_basis.dim(),
        });
        self.decision = decide(&self.trajectory, &self.config);
        Ok(self.decision)
    }

    fn update_moments(&mut self, y: &DVector<f64>) {
        let n = self.config.ambient_dim();
        let i = self.sample_count;
        match &mut self.moments {
            Moments::Factored { samples, gram } => {
                // extend Y^T Y by the new row and column
                let cross = samples.tr_mul(y);
                let m = samples.ncols();
                let mut g = std::mem::replace(gram, DMatrix::zeros(0, 0))
                    .insert_row(m, 0.0)
                    .insert_column(m, 0.0);
                for (j, c) in cross.iter().enumerate() {
                    g[(m, j)] = *c;
                    g[(j, m)] = *c;
                }
                g[(m, m)] = y.norm_squared();
                *gram = g;
                *samples = std::mem::replace(samples, DMatrix::zeros(0, 0)).insert_column(m, 0.0);
                samples.set_column(m, y);
                if i >= n {
                    let dense = &*samples * samples.transpose() / i as f64;
                    self.moments = Moments::Dense(dense);
                }
            }
            Moments::Dense(r) => {
                // R^(i) = (i-1)/i R^(i-1) + y y^T / i
                let i = i as f64;
                *r *= (i - 1.0) / i;
                r.ger(1.0 / i, y, y, 1.0);
            }
        }
    }

    // Spectrum of R^(i).
    //
    // While i < n the covariance has rank <= i, and its non-zero spectrum is
    // obtained from the i x i Gram matrix Y^T Y / i: if (Y^T Y / i) v = mu v
    // then R (Y v) = mu (Y v). This keeps each step at O(n i^2) instead of
    // O(n^3).
    fn spectrum(&self) -> Result<Spectrum> {
        let n = self.config.ambient_dim();
        match &self.moments {
            Moments::Factored { gram, .. } => {
                let eig = geometry::symmetric_eig(&(gram / self.sample_count as f64))?;
                let mut values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
                values.resize(n, 0.0);
                Ok(Spectrum::Thin {
                    values,
                    gram_vectors: eig.vectors,
                })
            }
            Moments::Dense(r) => {
                let eig = geometry::symmetric_eig(r)?;
                Ok(Spectrum::Full {
                    values: eig.values.iter().map(|v| v.max(0.0)).collect(),
                    vectors: eig.vectors,
                })
            }
        }
    }

    fn leading_basis(&self, spectrum: &Spectrum, k: usize) -> Result<SubspaceBasis> {
        let n = self.config.ambient_dim();
        if k == 0 {
            return Ok(SubspaceBasis::empty(n));
        }
        match spectrum {
            Spectrum::Full { vectors, .. } => Ok(SubspaceBasis::from_orthonormal(vectors.columns(0, k).into_owned())),
            Spectrum::Thin { values, gram_vectors } => {
                let Moments::Factored { samples, .. } = &self.moments else {
                    unreachable!("thin spectrum comes from factored moments")
                };
                let scale = self.sample_count as f64;
                let mut lifted = samples * gram_vectors.columns(0, k);
                for (j, mut col) in lifted.column_iter_mut().enumerate() {
                    col /= (scale * values[j]).sqrt();
                }
                // The lifted columns are orthonormal up to about
                // eps * values[0] / values[k-1]; re-orthonormalize only when
                // that is not negligible.
                if values[k - 1] >= LIFT_CONDITION_LIMIT * values[0] {
                    Ok(SubspaceBasis::from_orthonormal(lifted))
                } else {
                    orthonormalize(&lifted, geometry::SINGULAR_VALUE_FLOOR)
                }
            }
        }
    }

    /// Feeds samples until a decision, the end of the stream, or the budget.
    pub fn run<I>(&mut self, samples: I) -> Result<Decision>
    where
        I: IntoIterator,
        I::Item: Borrow<DVector<f64>>,
    {
        for y in samples {
            if self.decision.is_decided() || self.budget_exhausted() {
                break;
            }
            self.ingest(y.borrow())?;
        }
        Ok(self.decision)
    }
}

// Second moments of the samples seen so far. While fewer than n samples have
// arrived R^(i) = Y Y^T / i is kept in factored form, the raw samples Y and
// their Gram matrix; the dense recursion takes over once the count reaches n.
#[derive(Clone, Debug)]
enum Moments {
    Factored { samples: DMatrix<f64>, gram: DMatrix<f64> },
    Dense(DMatrix<f64>),
}

enum Spectrum {
    Thin {
        values: Vec<f64>,
        gram_vectors: DMatrix<f64>,
    },
    Full {
        values: Vec<f64>,
        vectors: DMatrix<f64>,
    },
}

impl Spectrum {
    fn values(&self) -> &[f64] {
        match self {
            Spectrum::Thin { values, .. } | Spectrum::Full { values, .. } => values,
        }
    }

    fn into_values(self) -> Vec<f64> {
        match self {
            Spectrum::Thin { values, .. } | Spectrum::Full { values, .. } => values,
        }
    }
}

impl Borrow<DVector<f64>> for crate::scenario::Sample {
    fn borrow(&self) -> &DVector<f64> {
        &self.y
    }
}

/// Final decision and full trajectory of a streamed run.
#[derive(Clone, Debug)]
pub struct StreamOutcome {
    pub decision: Decision,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Folds [`Detector::ingest`] over `samples` until decided or exhausted.
pub fn run_stream<I>(cfg: &DetectorConfig, samples: I) -> Result<StreamOutcome>
where
    I: IntoIterator,
    I::Item: Borrow<DVector<f64>>,
{
    let mut det = Detector::new(cfg.clone())?;
    let decision = det.run(samples)?;
    Ok(StreamOutcome {
        decision,
        trajectory: det.trajectory,
    })
}

/// Result of the noiseless breakpoint procedure.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakpointOutcome {
    /// Sample count at which the stacked volume vanished, if it did.
    pub breakpoint: Option<usize>,
    pub target_present: bool,
    /// Log of the stacked volume of the unit-normalized samples with `Q_S`,
    /// one entry per processed sample.
    pub stacked_log_volumes: Vec<f64>,
    /// Log of the volume of the unit-normalized samples alone.
    pub sample_log_volumes: Vec<f64>,
}

/// Noise-free detection by locating the breakpoint.
///
/// Samples are normalized to unit length and appended one at a time to two
/// incremental volumes: the samples stacked with `Q_S`, and the samples
/// alone. The breakpoint is the first sample whose incremental factor on the
/// stacked volume is at most `tol`, i.e. the stacked volume vanishes. The
/// target is present iff the sample-only factor at that point exceeds `tol`.
pub fn noiseless_breakpoint<I>(target: &SubspaceBasis, samples: I, tol: f64) -> Result<BreakpointOutcome>
where
    I: IntoIterator,
    I::Item: Borrow<DVector<f64>>,
{
    if !(tol > 0.0) {
        return Err(VcError::invalid("breakpoint tolerance must be > 0"));
    }
    let mut stacked = VolumeChain::from_basis(target);
    let mut alone = VolumeChain::new(target.ambient_dim());
    let mut out = BreakpointOutcome {
        breakpoint: None,
        target_present: false,
        stacked_log_volumes: Vec::new(),
        sample_log_volumes: Vec::new(),
    };
    for (m, y) in samples.into_iter().enumerate() {
        let y = y.borrow();
        let norm = y.norm();
        let unit = if norm > 0.0 { y / norm } else { y.clone() };
        let f_stacked = stacked.push(&unit)?;
        let f_alone = alone.push(&unit)?;
        out.stacked_log_volumes.push(stacked.log_volume());
        out.sample_log_volumes.push(alone.log_volume());
        if f_stacked <= tol {
            out.breakpoint = Some(m + 1);
            out.target_present = f_alone > tol;
            break;
        }
    }
    Ok(out)
}
