//! Sample-size and deviation bounds for the streaming detector, the limiting
//! constant `tau`, and a Monte Carlo check that the detector behaves the way
//! the bounds predict.
//!
//! Both calculators share the multiplier `(1 + eps) / (sqrt(delta + 1) - 1)^2`
//! applied to
//!
//! ```text
//! sum_{i != j <= k} l_i l_j / (l_i - l_j)^2  +  (n - k) sum_{i <= k} l_i s2 / (s2 - l_i)^2
//! ```
//!
//! with `k = d1 + d2` (target present) or `k = d1` (target absent). The
//! probability floors carry an unspecified constant `C`, so reports only
//! expose the exponent argument `k n eps^2` of `1 - exp(-k n eps^2 / C)`.
//! Deviation bounds are leading order; higher powers of `delta` are dropped.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{run_stream, DetectorConfig, TrajectoryPoint};
use crate::error::{Result, VcError};
use crate::geometry::{self, elementary_symmetric, singular_values, SubspaceBasis};
use crate::scenario::{trial_rng, Hypothesis, Scenario};

/// Inputs shared by both sample-size calculators.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    /// Population eigenvalues, descending. Exactly `signal_rank` of them
    /// exceed the noise variance; the remainder (if listed) must not.
    pub eigenvalues: Vec<f64>,
    pub noise_variance: f64,
    pub ambient_dim: usize,
    pub signal_rank: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// `d2`, needed for the target-present deviation bound `delta^d2`.
    pub target_dim: Option<usize>,
}

impl BoundInputs {
    /// Builds and validates inputs; the signal rank is the number of
    /// eigenvalues strictly above `noise_variance`.
    pub fn new(
        eigenvalues: Vec<f64>,
        noise_variance: f64,
        ambient_dim: usize,
        delta: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let signal_rank = eigenvalues.iter().filter(|&&l| l > noise_variance).count();
        let inputs = Self {
            eigenvalues,
            noise_variance,
            ambient_dim,
            signal_rank,
            delta,
            epsilon,
            target_dim: None,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn with_target_dim(mut self, d2: usize) -> Self {
        self.target_dim = Some(d2);
        self
    }

    pub fn signal_eigenvalues(&self) -> &[f64] {
        &self.eigenvalues[..self.signal_rank]
    }

    pub fn validate(&self) -> Result<()> {
        let s2 = self.noise_variance;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(VcError::invalid("noise variance must be positive and finite"));
        }
        if !(self.delta > 0.0) {
            return Err(VcError::invalid("delta must be > 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(VcError::invalid("epsilon must lie in (0, 1)"));
        }
        if self.eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(VcError::invalid("eigenvalues must be finite"));
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(VcError::invalid("eigenvalues must be listed in descending order"));
        }
        let k = self.signal_rank;
        if k == 0 {
            return Err(VcError::invalid("no eigenvalue exceeds the noise variance"));
        }
        if self.eigenvalues[..k].iter().filter(|&&l| l > s2).count() != k
            || self.eigenvalues[k..].iter().any(|&l| l > s2)
        {
            return Err(VcError::invalid(format!(
                "expected exactly {k} eigenvalues above the noise variance"
            )));
        }
        if k > self.ambient_dim {
            return Err(VcError::invalid(format!(
                "signal rank {k} exceeds ambient dimension {}",
                self.ambient_dim
            )));
        }
        if let Some(d2) = self.target_dim {
            if d2 == 0 || d2 > k {
                return Err(VcError::invalid("target dimension must lie in 1..=signal rank"));
            }
        }
        let signal = &self.eigenvalues[..k];
        for (i, a) in signal.iter().enumerate() {
            if let Some(b) = signal[i + 1..].iter().find(|&&b| b == *a) {
                return Err(VcError::SingularInput(format!(
                    "repeated signal eigenvalue {b}; the bound divides by (l_i - l_j)^2"
                )));
            }
        }
        Ok(())
    }

    /// `(1 + eps) / (sqrt(delta + 1) - 1)^2`.
    pub fn multiplier(&self) -> f64 {
        let root = (self.delta + 1.0).sqrt() - 1.0;
        (1.0 + self.epsilon) / (root * root)
    }

    /// The bracketed eigenvalue sum of the sample bound.
    pub fn spectral_sum(&self) -> f64 {
        let l = self.signal_eigenvalues();
        let s2 = self.noise_variance;
        let mut cross = 0.0;
        for (i, a) in l.iter().enumerate() {
            for (j, b) in l.iter().enumerate() {
                if i != j {
                    cross += a * b / ((a - b) * (a - b));
                }
            }
        }
        let noise: f64 = l.iter().map(|a| a * s2 / ((s2 - a) * (s2 - a))).sum();
        cross + (self.ambient_dim - self.signal_rank) as f64 * noise
    }

    fn m_required(&self) -> u64 {
        // the float-to-int cast saturates for astronomically small delta
        ((self.multiplier() * self.spectral_sum()).ceil() as u64).max(1)
    }

    fn exponent_argument(&self) -> f64 {
        (self.signal_rank * self.ambient_dim) as f64 * self.epsilon * self.epsilon
    }
}

/// Result of a sample-size calculation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m_required: u64,
    /// Leading-order bound on `|T^2|` (present) or `|T^2 - tau^2|` (absent);
    /// `None` when it depends on quantities that were not supplied.
    pub deviation_bound: Option<f64>,
    /// `k n eps^2`; the bound holds with probability at least
    /// `1 - exp(-exponent_argument / C)`.
    pub exponent_argument: f64,
}

/// Sample count after which `|T^2| <= delta^d2` (target present).
pub fn sample_bound_target_present(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    Ok(BoundReport {
        m_required: inputs.m_required(),
        deviation_bound: inputs.target_dim.map(|d2| inputs.delta.powi(d2 as i32)),
        exponent_argument: inputs.exponent_argument(),
    })
}

/// Sample count after which `T^2` is within the deviation bound of `tau^2`
/// (target absent). The deviation needs the bases; see
/// [`sample_bound_target_absent_with_bases`].
pub fn sample_bound_target_absent(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.validate()?;
    Ok(BoundReport {
        m_required: inputs.m_required(),
        deviation_bound: None,
        exponent_argument: inputs.exponent_argument(),
    })
}

/// As [`sample_bound_target_absent`], with the deviation bound
/// `s_{d1-1}(Q_C^T P_S^perp Q_C) delta` evaluated from the bases.
pub fn sample_bound_target_absent_with_bases(
    inputs: &BoundInputs,
    target: &SubspaceBasis,
    clutter: &SubspaceBasis,
) -> Result<BoundReport> {
    let mut report = sample_bound_target_absent(inputs)?;
    report.deviation_bound = Some(absent_deviation_factor(target, clutter)? * inputs.delta);
    Ok(report)
}

/// `s_{d1-1}(Q_C^T P_S^perp Q_C)`.
pub fn absent_deviation_factor(target: &SubspaceBasis, clutter: &SubspaceBasis) -> Result<f64> {
    if target.ambient_dim() != clutter.ambient_dim() {
        return Err(VcError::DimensionMismatch {
            what: "ambient dimension",
            expected: target.ambient_dim(),
            got: clutter.ambient_dim(),
        });
    }
    let d1 = clutter.dim();
    if d1 == 0 {
        return Err(VcError::invalid("clutter basis must have dimension >= 1"));
    }
    let coeffs = target.matrix().tr_mul(clutter.matrix());
    let residual = clutter.matrix() - target.matrix() * coeffs;
    let gram = residual.tr_mul(&residual);
    elementary_symmetric(&singular_values(&gram), d1 - 1)
}

/// `tau = Vol_{d1+d2}([Q_S, Q_C])`, the limit of `T` without a target.
pub fn tau(target: &SubspaceBasis, clutter: &SubspaceBasis) -> Result<f64> {
    let t = geometry::volume_correlation(target, clutter)?;
    if t < 1e-12 {
        return Err(VcError::DegenerateGeometry(format!(
            "target and clutter subspaces nearly intersect (tau = {t:.3e})"
        )));
    }
    Ok(t)
}

/// Median and 10%/90% quantiles of `1/T` across trials at one sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub m: usize,
    pub count: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
}

/// Linear-interpolation quantile of a sorted slice (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

/// Per-sample-count quantiles of `1/T` over a set of trajectories.
pub fn per_m_quantiles<'a, I>(trajectories: I) -> Vec<QuantileRow>
where
    I: IntoIterator<Item = &'a [TrajectoryPoint]>,
{
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for traj in trajectories {
        for p in traj {
            if columns.len() < p.i {
                columns.resize_with(p.i, Vec::new);
            }
            columns[p.i - 1].push(p.inv_t);
        }
    }
    columns
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .map(|(idx, mut c)| {
            c.sort_by(|a, b| a.total_cmp(b));
            QuantileRow {
                m: idx + 1,
                count: c.len(),
                median: quantile_sorted(&c, 0.5),
                q10: quantile_sorted(&c, 0.1),
                q90: quantile_sorted(&c, 0.9),
            }
        })
        .collect()
}

/// Monte Carlo summary of `1/T` under both hypotheses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub tau: f64,
    /// `1/tau`, the value `1/T` settles at without a target.
    pub plateau: f64,
    pub present: Vec<QuantileRow>,
    pub absent: Vec<QuantileRow>,
    /// `|median_absent(m) - plateau|` for each `m`.
    pub absent_deviation: Vec<f64>,
    pub present_final_median: f64,
    pub absent_final_median: f64,
    /// The absent-hypothesis deviation did not grow from the first and
    /// middle sample counts to the last one.
    pub absent_converging: bool,
    /// `present_final_median >= divergence_factor * plateau`.
    pub present_exceeds_plateau: bool,
}

/// Runs `trials` detector traces of `cfg.max_samples` samples under each
/// hypothesis of `sc` and summarizes `1/T`.
///
/// Decisions are disabled so every trace has the full length. Trial `t`
/// under hypothesis `h` uses [`trial_rng`]`(sc.config.seed, t, h)`.
pub fn validate_convergence(
    sc: &Scenario,
    cfg: &DetectorConfig,
    trials: usize,
    divergence_factor: f64,
) -> Result<ConvergenceSummary> {
    if trials == 0 {
        return Err(VcError::invalid("trials must be >= 1"));
    }
    let tau = tau(&sc.target_basis, &sc.clutter_basis)?;
    let plateau = 1.0 / tau;
    let trace_cfg = cfg.clone().tracing();
    let m = cfg.max_samples;

    let run = |hyp: Hypothesis| -> Result<Vec<Vec<TrajectoryPoint>>> {
        let sc = sc.with_hypothesis(hyp);
        (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let samples = sc.samples(trial_rng(sc.config.seed, t, hyp)).take(m);
                Ok(run_stream(&trace_cfg, samples)?.trajectory)
            })
            .collect()
    };
    let present_runs = run(Hypothesis::Present)?;
    let absent_runs = run(Hypothesis::Absent)?;

    let present = per_m_quantiles(present_runs.iter().map(Vec::as_slice));
    let absent = per_m_quantiles(absent_runs.iter().map(Vec::as_slice));
    let absent_deviation: Vec<f64> = absent.iter().map(|r| (r.median - plateau).abs()).collect();

    let present_final_median = present.last().map_or(f64::NAN, |r| r.median);
    let absent_final_median = absent.last().map_or(f64::NAN, |r| r.median);
    let absent_converging = match absent_deviation.as_slice() {
        [] => false,
        devs => {
            let last = devs[devs.len() - 1];
            let slack = 1e-12 * plateau;
            last <= devs[0] + slack && last <= devs[devs.len() / 2] + slack
        }
    };
    Ok(ConvergenceSummary {
        tau,
        plateau,
        present,
        absent,
        absent_deviation,
        present_final_median,
        absent_final_median,
        absent_converging,
        present_exceeds_plateau: present_final_median >= divergence_factor * plateau,
    })
}
