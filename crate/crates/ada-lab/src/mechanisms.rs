//! Player-side release protocols.
//!
//! Each round the player declares a noise distribution `Z_i` (the declaration
//! is visible to the adversary before it selects the query), then releases
//! `A_i = φ_{T_i} + Z_i`. Noise families are parameterized by standard
//! deviation so schedules are interchangeable by variance; the uniform family
//! with scale `w` is `U([-√3·w, √3·w])`, which has variance exactly `w²`.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::signopt::DiscretizedDistribution;
use crate::world::{PrivateTranscript, SharedTranscript};

#[derive(Debug, Clone, PartialEq)]
pub enum MechanismError {
    /// Schedules need at least one round.
    InvalidRoundCount { k: usize },
    /// Schedule length must equal the round count.
    ScheduleLengthMismatch { expected: usize, actual: usize },
    /// Negative noise scale.
    NegativeScale { value: f64 },
    /// A custom schedule is required for this kind but was not provided.
    MissingSchedule,
}

impl fmt::Display for MechanismError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidRoundCount { k } => write!(f, "round count k = {k} must be ≥ 1"),
            Self::ScheduleLengthMismatch { expected, actual } => {
                write!(f, "w_schedule has length {actual}, expected k = {expected}")
            }
            Self::NegativeScale { value } => write!(f, "noise scale {value} must be ≥ 0"),
            Self::MissingSchedule => write!(f, "mechanism kind requires an explicit w_schedule"),
        }
    }
}

impl std::error::Error for MechanismError {}

/// Noise distribution families the player may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
    PointMass,
    Tabulated,
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::Uniform => write!(f, "uniform"),
            Self::PointMass => write!(f, "point_mass"),
            Self::Tabulated => write!(f, "tabulated"),
        }
    }
}

/// A declared per-round noise distribution: family plus location/scale, with
/// an optional tabulated distribution for arbitrary shapes.
///
/// For `Tabulated`, the draw is `mean + T` where `T` follows `table`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub mean: f64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<DiscretizedDistribution>,
}

impl NoiseSpec {
    pub fn gaussian(mean: f64, scale: f64) -> Self {
        NoiseSpec { family: NoiseFamily::Gaussian, mean, scale, table: None }
    }

    pub fn uniform(mean: f64, scale: f64) -> Self {
        NoiseSpec { family: NoiseFamily::Uniform, mean, scale, table: None }
    }

    pub fn point_mass(value: f64) -> Self {
        NoiseSpec { family: NoiseFamily::PointMass, mean: value, scale: 0.0, table: None }
    }

    pub fn tabulated(mean: f64, table: DiscretizedDistribution) -> Self {
        NoiseSpec { family: NoiseFamily::Tabulated, mean, scale: 0.0, table: Some(table) }
    }

    /// Declared mean of the distribution.
    pub fn declared_mean(&self) -> f64 {
        match self.family {
            NoiseFamily::Tabulated => {
                self.mean + self.table.as_ref().map_or(0.0, |t| t.mean())
            }
            _ => self.mean,
        }
    }

    /// Declared variance of the distribution.
    pub fn variance(&self) -> f64 {
        match self.family {
            NoiseFamily::Gaussian | NoiseFamily::Uniform => self.scale * self.scale,
            NoiseFamily::PointMass => 0.0,
            NoiseFamily::Tabulated => self.table.as_ref().map_or(0.0, |t| t.variance()),
        }
    }

    /// Draws one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.mean + self.scale * z
            }
            NoiseFamily::Uniform => {
                let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                self.mean + 3.0_f64.sqrt() * self.scale * u
            }
            NoiseFamily::PointMass => self.mean,
            NoiseFamily::Tabulated => {
                let t = self.table.as_ref().expect("tabulated spec carries a table");
                self.mean + t.sample(rng.random::<f64>())
            }
        }
    }
}

/// Releases `A = φ + Z` with `Z` drawn from the declared distribution.
pub fn release<R: Rng + ?Sized>(phi: f64, noise: &NoiseSpec, rng: &mut R) -> (f64, f64) {
    let z = noise.sample(rng);
    (phi + z, z)
}

// ── Mechanisms ──────────────────────────────────────────────────────────

/// A release protocol: given the round index and the full history (including
/// the player-private half), declare this round's noise distribution.
///
/// The private transcript is part of the contract because a mechanism is
/// allowed to adapt its noise to everything it knows; the stock mechanisms
/// ignore it.
pub trait Mechanism: Send + Sync {
    fn declare(&self, round: usize, shared: &SharedTranscript, private: &PrivateTranscript)
        -> NoiseSpec;
    /// Number of rounds this mechanism is configured for.
    fn rounds(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    /// Gaussian noise with the given standard-deviation schedule.
    GaussianSchedule,
    /// No noise at all: releases are the raw statistic values.
    ZeroNoise,
    /// Uniform noise with the given standard-deviation schedule.
    UniformSchedule,
    /// Gaussian noise with a caller-supplied schedule.
    Custom,
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GaussianSchedule => write!(f, "gaussian_schedule"),
            Self::ZeroNoise => write!(f, "zero_noise"),
            Self::UniformSchedule => write!(f, "uniform_schedule"),
            Self::Custom => write!(f, "custom"),
        }
    }
}

/// Resolved mechanism configuration: a kind plus a full per-round
/// standard-deviation schedule of length `k`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    pub w_schedule: Vec<f64>,
}

impl MechanismConfig {
    pub fn new(kind: MechanismKind, w_schedule: Vec<f64>) -> Result<Self, MechanismError> {
        if w_schedule.is_empty() {
            return Err(MechanismError::InvalidRoundCount { k: 0 });
        }
        for &w in &w_schedule {
            if w < 0.0 || !w.is_finite() {
                return Err(MechanismError::NegativeScale { value: w });
            }
        }
        Ok(MechanismConfig { kind, w_schedule })
    }

    pub fn k(&self) -> usize {
        self.w_schedule.len()
    }

    pub fn build(&self) -> Box<dyn Mechanism> {
        let family = match self.kind {
            MechanismKind::UniformSchedule => NoiseFamily::Uniform,
            _ => NoiseFamily::Gaussian,
        };
        Box::new(ScheduleMechanism { family, w_schedule: self.w_schedule.clone() })
    }
}

/// The player strategy of the k-step upper bound: zero-mean noise with
/// standard deviation `(k-1)^{1/4}·σ` for every round except the last, and no
/// noise on the final release.
pub fn default_schedule(k: usize, sigma: f64) -> Result<MechanismConfig, MechanismError> {
    if k == 0 {
        return Err(MechanismError::InvalidRoundCount { k });
    }
    let w = ((k - 1) as f64).powf(0.25) * sigma;
    let mut schedule = vec![w; k];
    schedule[k - 1] = 0.0;
    MechanismConfig::new(MechanismKind::GaussianSchedule, schedule)
}

/// Zero-noise configuration: releases the statistic values exactly.
pub fn zero_noise(k: usize) -> Result<MechanismConfig, MechanismError> {
    if k == 0 {
        return Err(MechanismError::InvalidRoundCount { k });
    }
    MechanismConfig::new(MechanismKind::ZeroNoise, vec![0.0; k])
}

struct ScheduleMechanism {
    family: NoiseFamily,
    w_schedule: Vec<f64>,
}

impl Mechanism for ScheduleMechanism {
    fn declare(&self, round: usize, _shared: &SharedTranscript, _private: &PrivateTranscript)
        -> NoiseSpec {
        let w = self.w_schedule[round];
        if w == 0.0 {
            return NoiseSpec::point_mass(0.0);
        }
        match self.family {
            NoiseFamily::Uniform => NoiseSpec::uniform(0.0, w),
            _ => NoiseSpec::gaussian(0.0, w),
        }
    }

    fn rounds(&self) -> usize {
        self.w_schedule.len()
    }
}

/// Adaptive mechanism driven by a callback over the full (shared + private)
/// history. This is the hook for history-dependent noise selection.
pub struct AdaptiveMechanism<F> {
    pub k: usize,
    pub declare_fn: F,
}

impl<F> Mechanism for AdaptiveMechanism<F>
where
    F: Fn(usize, &SharedTranscript, &PrivateTranscript) -> NoiseSpec + Send + Sync,
{
    fn declare(&self, round: usize, shared: &SharedTranscript, private: &PrivateTranscript)
        -> NoiseSpec {
        (self.declare_fn)(round, shared, private)
    }

    fn rounds(&self) -> usize {
        self.k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngs::{self, Purpose};

    #[test]
    fn default_schedule_values() {
        let s = default_schedule(1, 1.0).unwrap();
        assert_eq!(s.w_schedule, vec![0.0]);

        let s = default_schedule(2, 1.0).unwrap();
        assert_eq!(s.w_schedule, vec![1.0, 0.0]);

        let s = default_schedule(5, 2.0).unwrap();
        let w = 4.0_f64.powf(0.25) * 2.0; // (k-1)^{1/4}·σ = √2·2
        for i in 0..4 {
            assert!((s.w_schedule[i] - w).abs() < 1e-15);
        }
        assert_eq!(s.w_schedule[4], 0.0);
        assert!((w - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn default_schedule_rejects_k_zero() {
        assert!(matches!(default_schedule(0, 1.0), Err(MechanismError::InvalidRoundCount { .. })));
    }

    #[test]
    fn point_mass_release_is_exact() {
        let mut rng = rngs::stream(1, 0, 0, Purpose::Noise);
        let (a, z) = release(3.7, &NoiseSpec::point_mass(0.0), &mut rng);
        assert_eq!(a, 3.7);
        assert_eq!(z, 0.0);
    }

    #[test]
    fn gaussian_release_mean_matches_declaration() {
        let n = 1_000_000u64;
        let noise = NoiseSpec::gaussian(0.0, 1.0);
        let mut sum = 0.0;
        for rep in 0..n {
            let mut rng = rngs::stream(5, rep, 0, Purpose::Noise);
            let (a, _) = release(0.0, &noise, &mut rng);
            sum += a;
        }
        let mean = sum / n as f64;
        // 4 standard errors of a unit-variance mean at 10⁶ draws
        assert!(mean.abs() < 4e-3, "mean {mean}");
    }

    // Var U([-2√3, 2√3]) computed by quadrature, then checked empirically.
    #[test]
    fn uniform_release_variance_matches_quadrature_oracle() {
        let w = 2.0;
        let half = 3.0_f64.sqrt() * w;
        // midpoint quadrature of ∫ x² / (2·half) dx over [-half, half]
        let panels = 20_000;
        let dx = 2.0 * half / panels as f64;
        let mut oracle = 0.0;
        for i in 0..panels {
            let x = -half + (i as f64 + 0.5) * dx;
            oracle += x * x * dx;
        }
        oracle /= 2.0 * half;
        assert!((oracle - 4.0).abs() < 1e-4, "oracle {oracle}");

        let n = 1_000_000u64;
        let noise = NoiseSpec::uniform(0.0, w);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for rep in 0..n {
            let mut rng = rngs::stream(6, rep, 0, Purpose::Noise);
            let z = noise.sample(&mut rng);
            sum += z;
            sumsq += z * z;
        }
        let var = sumsq / n as f64 - (sum / n as f64).powi(2);
        assert!((var - oracle).abs() / oracle < 0.01, "var {var} vs {oracle}");
    }

    #[test]
    fn declared_moments_match_empirical_for_all_families() {
        let table = DiscretizedDistribution::new(-1.0, 1.0, vec![0.25, 0.5, 0.25]).unwrap();
        let specs = [
            NoiseSpec::gaussian(0.3, 1.7),
            NoiseSpec::uniform(-0.2, 0.9),
            NoiseSpec::point_mass(0.42),
            NoiseSpec::tabulated(0.1, table),
        ];
        let n = 1_000_000u64;
        for (idx, spec) in specs.iter().enumerate() {
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for rep in 0..n {
                let mut rng = rngs::stream(100 + idx as u64, rep, 0, Purpose::Noise);
                let z = spec.sample(&mut rng);
                sum += z;
                sumsq += z * z;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let se_mean = (spec.variance().max(1e-30) / n as f64).sqrt();
            // the 1e-9 absolute slack covers summation error for zero-variance
            // families over 10⁶ terms
            assert!(
                (mean - spec.declared_mean()).abs() <= 4.0 * se_mean + 1e-9,
                "family {:?}: mean {mean} vs declared {}",
                spec.family,
                spec.declared_mean()
            );
            // SE of a variance estimate ≈ var·√(2/n) for near-Gaussian tails;
            // widen ×2 to cover the flat families.
            let se_var = spec.variance() * (2.0 / n as f64).sqrt() * 2.0;
            assert!(
                (var - spec.variance()).abs() <= 4.0 * se_var + 1e-9,
                "family {:?}: var {var} vs declared {}",
                spec.family,
                spec.variance()
            );
        }
    }

    #[test]
    fn zero_noise_mechanism_reproduces_phi() {
        let cfg = zero_noise(3).unwrap();
        let mech = cfg.build();
        let shared = SharedTranscript::default();
        let private = PrivateTranscript::default();
        for round in 0..3 {
            let spec = mech.declare(round, &shared, &private);
            let mut rng = rngs::stream(9, 0, round as u64, Purpose::Noise);
            let (a, z) = release(1.234 + round as f64, &spec, &mut rng);
            assert_eq!(z, 0.0);
            assert_eq!(a, 1.234 + round as f64);
        }
    }

    #[test]
    fn adaptive_callback_sees_private_history() {
        let mech = AdaptiveMechanism {
            k: 2,
            declare_fn: |round: usize, _s: &SharedTranscript, p: &PrivateTranscript| {
                if round == 0 {
                    NoiseSpec::gaussian(0.0, 1.0)
                } else {
                    // scale follows the magnitude of the first realized φ
                    NoiseSpec::gaussian(0.0, p.rounds[0].phi.abs().max(0.1))
                }
            },
        };
        let shared = SharedTranscript::default();
        let mut private = PrivateTranscript::default();
        private.rounds.push(crate::world::PrivateRound { noise_value: 0.0, phi: -2.5 });
        let spec = mech.declare(1, &shared, &private);
        assert_eq!(spec.scale, 2.5);
    }
}
