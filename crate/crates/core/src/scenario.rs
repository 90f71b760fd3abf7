//! Synthetic problem instances: a known target subspace, an unknown clutter
//! subspace with trivial intersection, and white Gaussian noise.
//!
//! # SNR convention
//!
//! `SNR_dB = 10 log10(E||x||^2 / E||w||^2)` where `x` is the noise-free part
//! of a target-present sample. With unit-variance coefficients
//! `E||x||^2 = d1 + d2` and `E||w||^2 = n sigma^2`, so
//!
//! ```text
//! sigma^2 = (d1 + d2) * 10^(-SNR_dB / 10) / n
//! ```
//!
//! The same `sigma` is used under both hypotheses. `snr_db = +inf` (written
//! `"inf"` in JSON) selects the noiseless regime `sigma = 0`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcError};
use crate::geometry::{self, orthonormalize, principal_angles, SubspaceBasis};

/// Smallest principal angle accepted between target and clutter subspaces.
pub const MIN_SEPARATION_ANGLE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    #[default]
    Present,
    Absent,
}

impl Hypothesis {
    pub fn is_present(self) -> bool {
        matches!(self, Hypothesis::Present)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Hypothesis::Present => "present",
            Hypothesis::Absent => "absent",
        }
    }
}

impl std::str::FromStr for Hypothesis {
    type Err = VcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "present" => Ok(Hypothesis::Present),
            "absent" => Ok(Hypothesis::Absent),
            other => Err(VcError::invalid(format!(
                "hypothesis must be `present` or `absent`, got `{other}`"
            ))),
        }
    }
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" || t == "noiseless" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "snr_db must be a number or \"inf\", got \"{t}\""
            ))),
        }
    }
}

/// Reproducible description of a scenario; bases are regenerated from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    /// Clutter dimension.
    pub d1: usize,
    /// Target dimension.
    pub d2: usize,
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub hypothesis: Hypothesis,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 {
            return Err(VcError::invalid("clutter and target dimensions must be >= 1"));
        }
        if self.d1 + self.d2 > self.n {
            return Err(VcError::invalid(format!(
                "d1 + d2 = {} exceeds ambient dimension {}",
                self.d1 + self.d2,
                self.n
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(VcError::invalid("snr_db must be finite or +inf"));
        }
        Ok(())
    }

    /// Noise variance implied by the SNR convention in the module docs.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            (self.d1 + self.d2) as f64 * 10f64.powf(-self.snr_db / 10.0) / self.n as f64
        }
    }

    pub fn with_hypothesis(&self, hypothesis: Hypothesis) -> Self {
        Self {
            hypothesis,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub target_basis: SubspaceBasis,
    pub clutter_basis: SubspaceBasis,
    pub noise_std: f64,
    pub config: ScenarioConfig,
}

/// One received vector `y_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub y: DVector<f64>,
}

/// Orthonormal basis of the span of `d` i.i.d. standard Gaussian vectors.
pub fn random_subspace<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<SubspaceBasis> {
    if d > n {
        return Err(VcError::invalid(format!(
            "subspace dimension {d} exceeds ambient dimension {n}"
        )));
    }
    if n == 0 {
        return Err(VcError::invalid("ambient dimension must be >= 1"));
    }
    loop {
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = orthonormalize(&x, geometry::SINGULAR_VALUE_FLOOR)?;
        // rank loss has probability zero, but redraw rather than return a
        // basis of the wrong dimension
        if b.dim() == d {
            return Ok(b);
        }
    }
}

pub fn make_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    loop {
        let target_basis = random_subspace(cfg.n, cfg.d2, &mut rng)?;
        let clutter_basis = random_subspace(cfg.n, cfg.d1, &mut rng)?;
        let smallest = principal_angles(&target_basis, &clutter_basis)?
            .smallest()
            .unwrap_or(std::f64::consts::FRAC_PI_2);
        if smallest > MIN_SEPARATION_ANGLE {
            return Ok(Scenario {
                target_basis,
                clutter_basis,
                noise_std: cfg.noise_variance().sqrt(),
                config: cfg.clone(),
            });
        }
    }
}

impl Scenario {
    pub fn ambient_dim(&self) -> usize {
        self.config.n
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    pub fn hypothesis(&self) -> Hypothesis {
        self.config.hypothesis
    }

    /// Same geometry and noise level under the other (or same) hypothesis.
    pub fn with_hypothesis(&self, hypothesis: Hypothesis) -> Self {
        Self {
            config: self.config.with_hypothesis(hypothesis),
            ..self.clone()
        }
    }

    /// Draws `y = Q_S a + Q_C b + w` (target present) or `y = Q_C b + w`.
    ///
    /// Draw order per sample: `a` (present only), `b`, then `w` (skipped when
    /// `sigma = 0`).
    pub fn draw_sample<R: Rng + ?Sized>(&self, index: usize, rng: &mut R) -> Sample {
        let n = self.ambient_dim();
        let mut y = DVector::zeros(n);
        if self.hypothesis().is_present() {
            let a = DVector::from_fn(self.config.d2, |_, _| rng.sample::<f64, _>(StandardNormal));
            y += self.target_basis.matrix() * a;
        }
        let b = DVector::from_fn(self.config.d1, |_, _| rng.sample::<f64, _>(StandardNormal));
        y += self.clutter_basis.matrix() * b;
        if self.noise_std > 0.0 {
            for v in y.iter_mut() {
                *v += self.noise_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Sample { index, y }
    }

    /// Infinite stream of samples indexed from 1.
    pub fn samples<'a, R: Rng + 'a>(&'a self, mut rng: R) -> impl Iterator<Item = Sample> + 'a {
        (1..).map(move |i| self.draw_sample(i, &mut rng))
    }

    /// `E{y y^T}` assembled analytically.
    pub fn population_covariance(&self) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let mut r = self.clutter_basis.projector();
        if self.hypothesis().is_present() {
            r += self.target_basis.projector();
        }
        r += DMatrix::<f64>::identity(n, n) * self.noise_variance();
        r
    }

    /// Eigenvalues of the population covariance, descending.
    pub fn population_eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(geometry::symmetric_eig(&self.population_covariance())?.values)
    }

    /// Number of population eigenvalues above the noise floor.
    pub fn signal_rank(&self) -> usize {
        match self.hypothesis() {
            Hypothesis::Present => self.config.d1 + self.config.d2,
            Hypothesis::Absent => self.config.d1,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the sample stream for one Monte Carlo trial.
///
/// `splitmix64(master ^ splitmix64(2 * trial_id + h))` with `h = 0` for the
/// target-present hypothesis and `h = 1` for target-absent. Each trial then
/// draws its samples from a `ChaCha8Rng` seeded with this value.
pub fn trial_seed(master: u64, trial_id: u64, hypothesis: Hypothesis) -> u64 {
    let h = match hypothesis {
        Hypothesis::Present => 0,
        Hypothesis::Absent => 1,
    };
    splitmix64(master ^ splitmix64(trial_id.wrapping_mul(2).wrapping_add(h)))
}

/// Sample generator for one trial of an experiment.
pub fn trial_rng(master: u64, trial_id: u64, hypothesis: Hypothesis) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(master, trial_id, hypothesis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::projector_complement_apply;

    fn cfg(n: usize, d1: usize, d2: usize, snr_db: f64, hypothesis: Hypothesis) -> ScenarioConfig {
        ScenarioConfig {
            n,
            d1,
            d2,
            snr_db,
            seed: 42,
            hypothesis,
        }
    }

    #[test]
    fn random_subspace_square_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_subspace(5, 5, &mut rng).unwrap();
        assert_eq!(b.dim(), 5);
        assert!(b.orthonormality_error() < 1e-12);
        assert!(random_subspace(3, 4, &mut rng).is_err());
    }

    #[test]
    fn random_subspaces_are_in_generic_position() {
        let a = random_subspace(100, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_subspace(100, 10, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let angles = principal_angles(&a, &b).unwrap();
        assert!(angles.angles().iter().all(|t| *t > 0.0));
    }

    #[test]
    fn random_subspace_is_deterministic() {
        let a = random_subspace(20, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_subspace(20, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.matrix().as_slice(), b.matrix().as_slice());
    }

    #[test]
    fn config_validation() {
        assert!(cfg(10, 6, 5, 0.0, Hypothesis::Present).validate().is_err());
        assert!(cfg(10, 0, 5, 0.0, Hypothesis::Present).validate().is_err());
        assert!(cfg(10, 5, 5, f64::NAN, Hypothesis::Present).validate().is_err());
        assert!(cfg(10, 5, 5, 3.0, Hypothesis::Absent).validate().is_ok());
    }

    #[test]
    fn figure_one_geometry() {
        let sc = make_scenario(&cfg(1024, 40, 10, -10.0, Hypothesis::Present)).unwrap();
        assert_eq!(sc.target_basis.dim(), 10);
        assert_eq!(sc.clutter_basis.dim(), 40);
        let expected = 50.0 * 10.0 / 1024.0;
        assert!((sc.noise_variance() - expected).abs() < 1e-12);
        let smallest = principal_angles(&sc.target_basis, &sc.clutter_basis)
            .unwrap()
            .smallest()
            .unwrap();
        assert!(smallest > MIN_SEPARATION_ANGLE);
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let sc = make_scenario(&cfg(16, 3, 1, f64::INFINITY, Hypothesis::Present)).unwrap();
        assert_eq!(sc.noise_std, 0.0);
    }

    #[test]
    fn scenario_is_deterministic_and_hypothesis_independent() {
        let a = make_scenario(&cfg(30, 4, 2, 0.0, Hypothesis::Present)).unwrap();
        let b = make_scenario(&cfg(30, 4, 2, 0.0, Hypothesis::Absent)).unwrap();
        assert_eq!(a.target_basis, b.target_basis);
        assert_eq!(a.clutter_basis, b.clutter_basis);
        assert_eq!(a.noise_std, b.noise_std);
    }

    #[test]
    fn noiseless_samples_respect_hypothesis() {
        let absent = make_scenario(&cfg(12, 3, 2, f64::INFINITY, Hypothesis::Absent)).unwrap();
        let present = absent.with_hypothesis(Hypothesis::Present);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 1..=1000 {
            let y = absent.draw_sample(i, &mut rng).y;
            let r = projector_complement_apply(&absent.clutter_basis, &y).unwrap();
            assert!(r.norm() < 1e-10);
            let y = present.draw_sample(i, &mut rng).y;
            let r = projector_complement_apply(&present.clutter_basis, &y).unwrap();
            assert!(r.norm() > 1e-8);
        }
    }

    #[test]
    fn sample_covariance_matches_population() {
        let sc = make_scenario(&ScenarioConfig {
            n: 8,
            d1: 2,
            d2: 1,
            snr_db: 0.0,
            seed: 77,
            hypothesis: Hypothesis::Present,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let draws = 100_000;
        let mut acc = DMatrix::<f64>::zeros(8, 8);
        for i in 1..=draws {
            let y = sc.draw_sample(i, &mut rng).y;
            acc += &y * y.transpose();
        }
        acc /= draws as f64;
        let pop = sc.population_covariance();
        assert!((&acc - &pop).norm() <= 0.05 * pop.norm());

        let empirical = geometry::symmetric_eig(&acc).unwrap().values;
        let exact = sc.population_eigenvalues().unwrap();
        for (e, p) in empirical.iter().zip(&exact) {
            assert!((e - p).abs() <= 0.05 * p, "{e} vs {p}");
        }
    }

    #[test]
    fn population_eigenvalues_orthogonal_case() {
        // hand-built orthogonal target and clutter with sigma^2 = 1
        let n = 8;
        let config = ScenarioConfig {
            n,
            d1: 2,
            d2: 1,
            snr_db: 10.0 * (3.0f64 / 8.0).log10(),
            seed: 0,
            hypothesis: Hypothesis::Present,
        };
        let sc = Scenario {
            target_basis: SubspaceBasis::coordinate(n, &[0]).unwrap(),
            clutter_basis: SubspaceBasis::coordinate(n, &[1, 2]).unwrap(),
            noise_std: config.noise_variance().sqrt(),
            config,
        };
        assert!((sc.noise_variance() - 1.0).abs() < 1e-12);
        let eig = sc.population_eigenvalues().unwrap();
        for (j, v) in eig.iter().enumerate() {
            let want = if j < 3 { 2.0 } else { 1.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn population_eigenvalues_have_expected_signal_rank() {
        for hyp in [Hypothesis::Present, Hypothesis::Absent] {
            let sc = make_scenario(&cfg(20, 4, 3, 0.0, hyp)).unwrap();
            let s2 = sc.noise_variance();
            let eig = sc.population_eigenvalues().unwrap();
            let k = sc.signal_rank();
            assert!(eig[..k].iter().all(|v| *v > s2 + 1e-9));
            assert!(eig[k..].iter().all(|v| (v - s2).abs() < 1e-9));
        }
    }

    #[test]
    fn trial_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for t in 0..200 {
            for h in [Hypothesis::Present, Hypothesis::Absent] {
                assert!(seen.insert(trial_seed(1, t, h)));
            }
        }
        assert_eq!(
            trial_seed(9, 3, Hypothesis::Absent),
            trial_seed(9, 3, Hypothesis::Absent)
        );
    }

    #[test]
    fn config_json_round_trip_with_infinite_snr() {
        let c = cfg(16, 3, 1, f64::INFINITY, Hypothesis::Absent);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"snr_db\":\"inf\""));
        assert!(text.contains("\"hypothesis\":\"absent\""));
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
