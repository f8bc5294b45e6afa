//! Runs the k-round game between a mechanism and an adversary over many
//! replications and estimates per-round bias and mean squared error.
//!
//! Replications are independent: each is keyed by `(seed, replication)`
//! through the counter-based RNG scheme, grouped into fixed-size blocks.
//! Workers process whole blocks and the block summaries are merged in index
//! order, so every statistic is bit-identical for any worker count.

use std::fmt;

use rayon::prelude::*;

use crate::adversaries::{AdversaryConfig, AdversaryError, SharedTracker};
use crate::bounds::BoundReport;
use crate::mechanisms::{release, MechanismConfig};
use crate::rngs::{self, Purpose};
use crate::world::{GameHistory, GaussianWorldState, WorldError};

/// Replications per deterministic work unit.
const BLOCK_SIZE: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    World(WorldError),
    Adversary(AdversaryError),
    /// Configuration failed validation.
    InvalidConfig { detail: String },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::World(e) => write!(f, "world: {e}"),
            Self::Adversary(e) => write!(f, "adversary: {e}"),
            Self::InvalidConfig { detail } => write!(f, "invalid config: {detail}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<WorldError> for HarnessError {
    fn from(e: WorldError) -> Self {
        HarnessError::World(e)
    }
}

impl From<AdversaryError> for HarnessError {
    fn from(e: AdversaryError) -> Self {
        HarnessError::Adversary(e)
    }
}

/// How per-round expected losses combine into one risk number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conjunction {
    Max,
    Sum,
    Product,
}

impl Conjunction {
    pub fn combine(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Conjunction::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Conjunction::Sum => values.sum(),
            Conjunction::Product => values.product(),
        }
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conjunction::Max => write!(f, "max"),
            Conjunction::Sum => write!(f, "sum"),
            Conjunction::Product => write!(f, "product"),
        }
    }
}

/// One full experiment: the game shape, both players, and the Monte Carlo
/// budget.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub k: usize,
    pub sigma: f64,
    pub mechanism: MechanismConfig,
    pub adversary: AdversaryConfig,
    pub replications: u64,
    pub seed: u64,
    pub conjunction: Conjunction,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.k < 1 {
            return Err(HarnessError::InvalidConfig { detail: "k must be ≥ 1".into() });
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(HarnessError::InvalidConfig {
                detail: format!("sigma must be positive, got {}", self.sigma),
            });
        }
        if self.replications < 1 {
            return Err(HarnessError::InvalidConfig {
                detail: "replications must be ≥ 1".into(),
            });
        }
        if self.mechanism.k() != self.k {
            return Err(HarnessError::InvalidConfig {
                detail: format!(
                    "w_schedule length {} does not match k = {}",
                    self.mechanism.k(),
                    self.k
                ),
            });
        }
        if (self.adversary.sigma - self.sigma).abs() > 1e-12 * self.sigma {
            return Err(HarnessError::InvalidConfig {
                detail: format!(
                    "adversary.sigma = {} must equal sigma = {} (the adversary knows the world)",
                    self.adversary.sigma, self.sigma
                ),
            });
        }
        if matches!(self.adversary.kind, crate::adversaries::AdversaryKind::BayesSign)
            && self.k < 2
        {
            return Err(HarnessError::InvalidConfig {
                detail: "bayes_sign needs k ≥ 2".into(),
            });
        }
        Ok(())
    }
}

/// Per-round Monte Carlo estimates.
///
/// `bias_sq_hat` is the bias-corrected square of the mean realized deviation
/// (`bias_hat² - bias_se²`, floored at 0). `cond_bias_sq_hat` is the mean of
/// the squared *conditional* bias — the expected squared value of
/// `E[φ_i - μ_i | releases, T_i]` — which is the quantity the sharpness
/// bounds bracket.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RoundStats {
    pub bias_hat: f64,
    pub bias_se: f64,
    pub bias_sq_hat: f64,
    pub cond_bias_sq_hat: f64,
    pub cond_bias_sq_se: f64,
    pub mse_hat: f64,
    pub mse_se: f64,
}

/// Monte Carlo risk estimates with the matching closed-form reference lines.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RiskReport {
    pub per_round: Vec<RoundStats>,
    pub combined_risk: f64,
    pub bound_report: BoundReport,
    pub replications_used: u64,
}

impl RiskReport {
    pub fn max_round_mse(&self) -> f64 {
        self.per_round.iter().fold(f64::NEG_INFINITY, |a, r| a.max(r.mse_hat))
    }

    pub fn final_round(&self) -> &RoundStats {
        self.per_round.last().expect("k ≥ 1")
    }
}

// ── Streaming moments ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.n += other.n;
    }

    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n as f64 - 1.0) / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Default)]
struct RoundAccumulator {
    bias: Moments,
    cond_bias_sq: Moments,
    sq_err: Moments,
}

impl RoundAccumulator {
    fn merge(&mut self, other: &RoundAccumulator) {
        self.bias.merge(&other.bias);
        self.cond_bias_sq.merge(&other.cond_bias_sq);
        self.sq_err.merge(&other.sq_err);
    }
}

// ── Game loop ───────────────────────────────────────────────────────────

/// Plays one complete game and returns its transcript. Deterministic given
/// `(config.seed, replication_index)`.
pub fn run_game(config: &ExperimentConfig, replication_index: u64) -> Result<GameHistory, HarnessError> {
    config.validate()?;
    let mechanism = config.mechanism.build();
    let mut adversary = config.adversary.build(config.k);
    let mut world =
        GaussianWorldState::new(config.sigma, rngs::world_seed(config.seed, replication_index));
    let mut history = GameHistory::default();

    for round in 0..config.k {
        // The noise distribution is declared before the query is selected.
        let declared = mechanism.declare(round, &history.shared, &history.player_private);
        let query = adversary.select(&history.shared, &declared)?;
        world = world.extend(query.clone())?;
        let phi = *world.realized.last().expect("just extended");
        let mut noise_rng = rngs::stream(config.seed, replication_index, round as u64, Purpose::Noise);
        let (a, z) = release(phi, &declared, &mut noise_rng);
        debug_assert_eq!(a, phi + z);
        history.push_round(query, declared, phi, z);
    }
    Ok(history)
}

/// Per-round samples derived from one transcript: realized deviation
/// `φ_i - μ_i`, realized conditional bias `v_i^T(Σ+W)^{-1}(A-μ)` (a function
/// of the shared transcript only), and squared error `(A_i - μ_i)²`.
fn transcript_samples(history: &GameHistory, sigma: f64) -> Vec<(f64, f64, f64)> {
    let mut tracker = SharedTracker::new(sigma);
    let mut prefix = crate::world::SharedTranscript::default();
    let mut out = Vec::with_capacity(history.len());
    for (shared_round, private_round) in
        history.shared.rounds.iter().zip(&history.player_private.rounds)
    {
        tracker.sync(&prefix);
        let cond_bias = if prefix.is_empty() {
            0.0
        } else {
            tracker.conditional_bias(&prefix, &shared_round.query.cov_with_history)
        };
        let bias_sample = private_round.phi - shared_round.query.mean;
        let err = shared_round.release - shared_round.query.mean;
        out.push((bias_sample, cond_bias, err * err));
        prefix.rounds.push(shared_round.clone());
    }
    out
}

fn run_block(
    config: &ExperimentConfig,
    rep_lo: u64,
    rep_hi: u64,
) -> Result<Vec<RoundAccumulator>, HarnessError> {
    let mut acc = vec![RoundAccumulator::default(); config.k];
    for rep in rep_lo..rep_hi {
        let history = run_game(config, rep)?;
        for (round, (bias, cond, sq)) in
            transcript_samples(&history, config.sigma).into_iter().enumerate()
        {
            acc[round].bias.push(bias);
            acc[round].cond_bias_sq.push(cond * cond);
            acc[round].sq_err.push(sq);
        }
    }
    Ok(acc)
}

/// Runs `config.replications` games for replication indices `[0, R)` and
/// aggregates the per-round statistics.
pub fn estimate_risk(config: &ExperimentConfig) -> Result<RiskReport, HarnessError> {
    estimate_risk_range(config, 0, config.replications)
}

/// Range form of [`estimate_risk`]: replication indices `[rep_lo, rep_hi)`.
/// Disjoint ranges with the same seed are statistically independent, which
/// the replication-splitting diagnostics rely on.
pub fn estimate_risk_range(
    config: &ExperimentConfig,
    rep_lo: u64,
    rep_hi: u64,
) -> Result<RiskReport, HarnessError> {
    config.validate()?;
    if rep_hi <= rep_lo {
        return Err(HarnessError::InvalidConfig { detail: "empty replication range".into() });
    }
    let blocks: Vec<(u64, u64)> = {
        let mut v = Vec::new();
        let mut lo = rep_lo;
        while lo < rep_hi {
            let hi = (lo + BLOCK_SIZE).min(rep_hi);
            v.push((lo, hi));
            lo = hi;
        }
        v
    };
    // Blocks run in parallel; the fold below is sequential in block order, so
    // the result is independent of the worker count.
    let partials: Vec<Result<Vec<RoundAccumulator>, HarnessError>> =
        blocks.par_iter().map(|&(lo, hi)| run_block(config, lo, hi)).collect();
    let mut total = vec![RoundAccumulator::default(); config.k];
    for partial in partials {
        let partial = partial?;
        for (t, p) in total.iter_mut().zip(&partial) {
            t.merge(p);
        }
    }

    let per_round: Vec<RoundStats> = total
        .iter()
        .map(|acc| {
            let bias_hat = acc.bias.mean;
            let bias_se = acc.bias.standard_error();
            let bias_sq_hat = (bias_hat * bias_hat - bias_se * bias_se).max(0.0);
            RoundStats {
                bias_hat,
                bias_se,
                bias_sq_hat,
                cond_bias_sq_hat: acc.cond_bias_sq.mean,
                cond_bias_sq_se: acc.cond_bias_sq.standard_error(),
                mse_hat: acc.sq_err.mean,
                mse_se: acc.sq_err.standard_error(),
            }
        })
        .collect();

    let combined_risk = config.conjunction.combine(per_round.iter().map(|r| r.mse_hat));
    let bound_report =
        BoundReport::evaluate(config.k, config.sigma, &config.mechanism.w_schedule);
    Ok(RiskReport {
        per_round,
        combined_risk,
        bound_report,
        replications_used: rep_hi - rep_lo,
    })
}

/// Runs every configuration, reporting per-config failures without aborting
/// the rest. Output order matches input order.
pub fn sweep(configs: &[ExperimentConfig]) -> Vec<Result<RiskReport, HarnessError>> {
    configs.iter().map(estimate_risk).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversaries::AdversaryKind;
    use crate::mechanisms::{default_schedule, zero_noise, MechanismConfig, MechanismKind};

    fn config(
        k: usize,
        sigma: f64,
        mechanism: MechanismConfig,
        kind: AdversaryKind,
        replications: u64,
        seed: u64,
    ) -> ExperimentConfig {
        ExperimentConfig {
            k,
            sigma,
            mechanism,
            adversary: AdversaryConfig { kind, sigma },
            replications,
            seed,
            conjunction: Conjunction::Max,
        }
    }

    use crate::adversaries::AdversaryConfig;

    #[test]
    fn k1_zero_noise_releases_statistic_exactly() {
        let cfg = config(1, 1.0, zero_noise(1).unwrap(), AdversaryKind::FixedSequence, 4000, 3);
        let report = estimate_risk(&cfg).unwrap();
        let r = &report.per_round[0];
        // A₁ = φ₁ so bias is 0 by symmetry and MSE ≈ σ².
        assert!(r.bias_hat.abs() < 4.0 * r.bias_se);
        assert!((r.mse_hat - 1.0).abs() < 4.0 * r.mse_se);
        for rep in 0..20 {
            let h = run_game(&cfg, rep).unwrap();
            assert_eq!(h.shared.rounds[0].release, h.player_private.rounds[0].phi);
        }
    }

    #[test]
    fn transcripts_are_deterministic_and_reconstruct() {
        let cfg = config(
            4,
            1.0,
            default_schedule(4, 1.0).unwrap(),
            AdversaryKind::KStepGreedy,
            1,
            42,
        );
        let a = run_game(&cfg, 7).unwrap();
        let b = run_game(&cfg, 7).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert!(a.reconstruction_holds());
        let c = run_game(&cfg, 8).unwrap();
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap()
        );
    }

    #[test]
    fn bayes_final_query_has_expected_shape() {
        let cfg = config(
            2,
            1.0,
            default_schedule(2, 1.0).unwrap(),
            AdversaryKind::BayesSign,
            1,
            5,
        );
        let h = run_game(&cfg, 0).unwrap();
        assert_eq!(h.len(), 2);
        let final_cov = &h.shared.rounds[1].query.cov_with_history;
        assert_eq!(final_cov.len(), 1);
        // |cov| = σ²/√(k-1) = 1
        assert!((final_cov[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_k3_respects_theorem_bound_empirically() {
        // w² = √2 σ² with k = 3: per-round MSE stays below 2(√2+1)σ².
        let cfg = config(
            3,
            1.0,
            default_schedule(3, 1.0).unwrap(),
            AdversaryKind::KStepGreedy,
            20_000,
            11,
        );
        let report = estimate_risk(&cfg).unwrap();
        let bound = 2.0 * (2.0_f64.sqrt() + 1.0);
        let max_se = report.per_round.iter().map(|r| r.mse_se).fold(0.0, f64::max);
        assert!(
            report.max_round_mse() <= bound + 4.0 * max_se,
            "max MSE {} vs bound {bound}",
            report.max_round_mse()
        );
    }

    #[test]
    fn sharpness_sandwich_small_scale() {
        // k=10, w² = 300: final-round conditional squared bias lands inside
        // [(k-1)σ⁴/(w²+σ²), (k-1)σ⁴/w²] = [9/301, 9/300].
        let w = 300.0_f64.sqrt();
        let mech = MechanismConfig::new(MechanismKind::Custom, vec![w; 10]).unwrap();
        let cfg = config(10, 1.0, mech, AdversaryKind::OrthogonalThenOneStep, 60_000, 17);
        let report = estimate_risk(&cfg).unwrap();
        let last = report.final_round();
        let lo = 9.0 / 301.0;
        let hi = 9.0 / 300.0;
        assert!(
            last.cond_bias_sq_hat >= lo - 4.0 * last.cond_bias_sq_se
                && last.cond_bias_sq_hat <= hi + 4.0 * last.cond_bias_sq_se,
            "cond bias² {} ∉ [{lo}, {hi}] ± 4·{}",
            last.cond_bias_sq_hat,
            last.cond_bias_sq_se
        );
    }

    #[test]
    fn one_step_zero_noise_k2_bias_matches_half_normal_mean() {
        // With w = 0 the adversary reads φ₁ exactly: E[bias] = σ√(2/π).
        let cfg = config(2, 1.0, zero_noise(2).unwrap(), AdversaryKind::OrthogonalThenOneStep, 40_000, 23);
        let report = estimate_risk(&cfg).unwrap();
        let last = report.final_round();
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (last.bias_hat - want).abs() < 4.0 * last.bias_se,
            "bias {} vs {want}",
            last.bias_hat
        );
    }

    #[test]
    fn estimates_split_by_half_seed_agree() {
        let cfg = config(
            5,
            1.0,
            default_schedule(5, 1.0).unwrap(),
            AdversaryKind::KStepGreedy,
            40_000,
            29,
        );
        let first = estimate_risk_range(&cfg, 0, 20_000).unwrap();
        let second = estimate_risk_range(&cfg, 20_000, 40_000).unwrap();
        for (a, b) in first.per_round.iter().zip(&second.per_round) {
            let combined = (a.mse_se * a.mse_se + b.mse_se * b.mse_se).sqrt();
            assert!(
                (a.mse_hat - b.mse_hat).abs() < 6.0 * combined,
                "halves differ: {} vs {}",
                a.mse_hat,
                b.mse_hat
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = config(
            3,
            1.0,
            default_schedule(3, 1.0).unwrap(),
            AdversaryKind::BayesSign,
            10_000,
            31,
        );
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool8 = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let r1 = pool1.install(|| estimate_risk(&cfg)).unwrap();
        let r8 = pool8.install(|| estimate_risk(&cfg)).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r8).unwrap()
        );
    }

    #[test]
    fn sweep_preserves_order_and_duplicates_agree() {
        let mk = |k: usize, seed: u64| {
            config(k, 1.0, default_schedule(k, 1.0).unwrap(), AdversaryKind::KStepGreedy, 2000, seed)
        };
        let configs = vec![mk(2, 1), mk(5, 1), mk(2, 1)];
        let reports = sweep(&configs);
        assert_eq!(reports.len(), 3);
        let r0 = reports[0].as_ref().unwrap();
        let r2 = reports[2].as_ref().unwrap();
        assert_eq!(
            serde_json::to_string(r0).unwrap(),
            serde_json::to_string(r2).unwrap()
        );
        assert_eq!(sweep(&[]).len(), 0);
    }

    #[test]
    fn invalid_configs_are_rejected_with_named_reasons() {
        let mut cfg = config(
            2,
            1.0,
            default_schedule(2, 1.0).unwrap(),
            AdversaryKind::BayesSign,
            10,
            1,
        );
        cfg.adversary.sigma = 2.0;
        let err = estimate_risk(&cfg).unwrap_err();
        assert!(err.to_string().contains("adversary.sigma"));

        let cfg2 = config(
            1,
            1.0,
            default_schedule(1, 1.0).unwrap(),
            AdversaryKind::BayesSign,
            10,
            1,
        );
        assert!(matches!(cfg2.validate(), Err(HarnessError::InvalidConfig { .. })));
    }
}
