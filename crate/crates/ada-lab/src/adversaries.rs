//! Query selection protocols.
//!
//! Four strategies are provided:
//!
//! - a non-adaptive orthogonal baseline (every query independent of the past),
//! - the one-step least-favorable construction: orthogonal queries followed by
//!   a final query whose covariance vector maximizes the conditional bias
//!   subject to PSD feasibility,
//! - the per-round greedy variant that applies the same construction at every
//!   round,
//! - the Bayes-sign adversary: estimate the sign of each centered statistic
//!   from the releases with a likelihood-ratio test, then align the final
//!   query's correlations with the estimated signs.
//!
//! Adversary code receives only [`SharedTranscript`] values; realized
//! statistics and noise stay on the other side of the type firewall.

use std::fmt;

use crate::linalg::{dot, Cholesky, SymMatrix};
use crate::mathx::{normal_cdf, normal_pdf, normal_upper_tail};
use crate::mechanisms::{NoiseFamily, NoiseSpec};
use crate::world::{QuerySpec, SharedTranscript, JITTER_REL, PSD_TOL_REL};

#[derive(Debug, Clone, PartialEq)]
pub enum AdversaryError {
    /// Release value was NaN or infinite.
    NonFiniteRelease { round: usize },
    /// Bayes final selection requires the first k-1 queries to be independent
    /// with variance σ².
    AssumptionViolation { detail: String },
    /// Bayes final selection needs at least one completed round.
    EmptyHistory,
}

impl fmt::Display for AdversaryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFiniteRelease { round } => {
                write!(f, "non-finite release at round {round}")
            }
            Self::AssumptionViolation { detail } => {
                write!(f, "history violates the independence assumption: {detail}")
            }
            Self::EmptyHistory => write!(f, "sign adversary needs at least one completed round"),
        }
    }
}

impl std::error::Error for AdversaryError {}

// ── Least-favorable covariance ──────────────────────────────────────────

/// Maximizes `⟨v, x⟩` over covariance vectors `v` with `v^T Σ^{-1} v ≤ σ²`
/// (the PSD feasibility ellipsoid at the variance cap).
///
/// The optimum is `v = σ·Σx/‖x‖_Σ` with value `σ‖x‖_Σ`, `‖x‖_Σ = √(x^T Σ x)`.
/// `x = 0` is degenerate (any feasible v is optimal); returns `(0, 0)`.
pub fn least_favorable_covariance(
    x: &[f64],
    sigma_mat: &SymMatrix,
    sigma: f64,
) -> (Vec<f64>, f64) {
    assert_eq!(x.len(), sigma_mat.dim());
    let sx = sigma_mat.matvec(x);
    let norm_sq = dot(x, &sx);
    if norm_sq <= 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let norm = norm_sq.sqrt();
    let v: Vec<f64> = sx.iter().map(|s| sigma * s / norm).collect();
    (v, sigma * norm)
}

/// Incrementally maintained view of a shared transcript: the query covariance
/// Σ, the Cholesky factor of Σ + W (W = declared noise variances), and the
/// jittered factor of Σ itself, all grown as rounds complete.
///
/// The jittered Σ factor reproduces the world's PSD check arithmetic exactly,
/// which lets the adversary clip boundary covariance vectors into the
/// feasible set instead of overshooting it by accumulated rounding.
#[derive(Debug, Clone)]
pub struct SharedTracker {
    sigma: f64,
    cov: SymMatrix,
    chol_sw: Cholesky,
    chol_sigma: Cholesky,
    seen: usize,
}

impl SharedTracker {
    pub fn new(sigma: f64) -> Self {
        SharedTracker {
            sigma,
            cov: SymMatrix::empty(),
            chol_sw: Cholesky::empty(),
            chol_sigma: Cholesky::empty(),
            seen: 0,
        }
    }

    fn jitter(&self) -> f64 {
        JITTER_REL * self.sigma * self.sigma
    }

    /// Absorbs rounds completed since the last sync.
    pub fn sync(&mut self, shared: &SharedTranscript) {
        while self.seen < shared.len() {
            let round = &shared.rounds[self.seen];
            let v = &round.query.cov_with_history;
            let lambda = round.query.variance;
            let w_sq = round.declared_noise.variance();
            self.cov.extend(v, lambda);
            self.chol_sw
                .extend(v, lambda + w_sq + self.jitter(), self.jitter())
                .expect("jittered extension is always admissible");
            self.chol_sigma
                .extend(v, lambda + self.jitter(), self.jitter())
                .expect("jittered extension is always admissible");
            self.seen += 1;
        }
    }

    pub fn cov(&self) -> &SymMatrix {
        &self.cov
    }

    /// `x = (Σ + W)^{-1}(A - μ)` for the synced rounds.
    pub fn whitened_residuals(&self, shared: &SharedTranscript) -> Vec<f64> {
        assert_eq!(self.seen, shared.len(), "tracker out of sync");
        self.chol_sw.solve(&shared.residuals())
    }

    /// Conditional bias `v^T(Σ+W)^{-1}(A-μ)` of a candidate covariance vector.
    pub fn conditional_bias(&self, shared: &SharedTranscript, v: &[f64]) -> f64 {
        dot(v, &self.whitened_residuals(shared))
    }

    /// Shrinks a boundary covariance vector just enough that the augmented
    /// covariance passes the world's feasibility check in floating point.
    fn clip_feasible(&self, mut v: Vec<f64>, lambda: f64) -> Vec<f64> {
        let pivot = self.chol_sigma.extension_pivot(&v, lambda);
        if pivot < 0.0 {
            let beta = (lambda / (lambda - pivot)).sqrt();
            for c in v.iter_mut() {
                *c *= beta;
            }
        }
        v
    }
}

// ── Spec operations (single-shot forms) ─────────────────────────────────

/// One-step least-favorable selection from a completed transcript: variance
/// σ², mean 0, covariance vector from [`least_favorable_covariance`] at
/// `x = (Σ+W)^{-1}(A-μ)`.
pub fn select_one_step(shared: &SharedTranscript, sigma: f64) -> QuerySpec {
    let mut tracker = SharedTracker::new(sigma);
    tracker.sync(shared);
    select_one_step_with(&tracker, shared, sigma)
}

fn select_one_step_with(
    tracker: &SharedTracker,
    shared: &SharedTranscript,
    sigma: f64,
) -> QuerySpec {
    if shared.is_empty() {
        return QuerySpec::unconditional(0.0, sigma * sigma);
    }
    let x = tracker.whitened_residuals(shared);
    let (v, _) = least_favorable_covariance(&x, tracker.cov(), sigma);
    let v = tracker.clip_feasible(v, sigma * sigma);
    QuerySpec { mean: 0.0, variance: sigma * sigma, cov_with_history: v }
}

/// Greedy selection: the one-step construction applied at the current round,
/// whatever the round index (round 1 is the unconditional query at the
/// variance cap).
pub fn select_k_step_greedy(shared: &SharedTranscript, sigma: f64) -> QuerySpec {
    select_one_step(shared, sigma)
}

// ── Bayes sign classifier ───────────────────────────────────────────────

/// Sign estimates for the centered statistics of completed rounds, with the
/// per-round log-likelihood ratios that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SignEstimate {
    pub signs: Vec<i8>,
    pub per_round_loglr: Vec<f64>,
}

/// Log-likelihood ratio `log P(A | φ-μ > 0) / P(A | φ-μ < 0)` for a single
/// release under signal `φ-μ ~ N(0, σ²)` independent of the declared noise.
///
/// Symmetric families reduce to closed forms; tabulated noise evaluates the
/// exact mixture likelihood of its atoms.
pub fn log_likelihood_ratio(
    a: f64,
    mu: f64,
    noise: &NoiseSpec,
    sigma: f64,
) -> Result<f64, AdversaryError> {
    if !a.is_finite() {
        return Err(AdversaryError::NonFiniteRelease { round: 0 });
    }
    let r = a - mu - noise.mean; // centered observation x + (Z - mean)
    match noise.family {
        NoiseFamily::PointMass => Ok(infinite_lr(r)),
        NoiseFamily::Gaussian => {
            if noise.scale == 0.0 {
                return Ok(infinite_lr(r));
            }
            // A - μ ~ x + Z: conditioning on sign(x) gives skew-normal halves;
            // the ratio collapses to Φ(αu)/Φ(-αu) with u = r/√(σ²+w²), α = σ/w.
            let s = (sigma * sigma + noise.scale * noise.scale).sqrt();
            let alpha = sigma / noise.scale;
            let u = alpha * r / s;
            Ok(log_phi(u) - log_phi(-u))
        }
        NoiseFamily::Uniform => {
            if noise.scale == 0.0 {
                return Ok(infinite_lr(r));
            }
            let half = 3.0_f64.sqrt() * noise.scale;
            let lo = r - half;
            let hi = r + half;
            let mass_pos = if hi > 0.0 {
                normal_cdf(hi / sigma) - normal_cdf(lo.max(0.0) / sigma)
            } else {
                0.0
            };
            let mass_neg = if lo < 0.0 {
                normal_cdf(hi.min(0.0) / sigma) - normal_cdf(lo / sigma)
            } else {
                0.0
            };
            Ok(ratio_to_loglr(mass_pos, mass_neg))
        }
        NoiseFamily::Tabulated => {
            let table = noise.table.as_ref().expect("tabulated spec carries a table");
            let mut num = 0.0;
            let mut den = 0.0;
            for (t, wgt) in table.points().zip(table.weights.iter()) {
                let x = r - t;
                let lik = wgt * normal_pdf(x / sigma);
                if x > 0.0 {
                    num += lik;
                } else if x < 0.0 {
                    den += lik;
                }
            }
            Ok(ratio_to_loglr(num, den))
        }
    }
}

fn infinite_lr(r: f64) -> f64 {
    if r > 0.0 {
        f64::INFINITY
    } else if r < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

fn ratio_to_loglr(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else if num == 0.0 {
        f64::NEG_INFINITY
    } else {
        num.ln() - den.ln()
    }
}

// log Φ(u) with far-tail accuracy on the negative side.
fn log_phi(u: f64) -> f64 {
    if u < -6.0 {
        normal_upper_tail(-u).ln()
    } else {
        normal_cdf(u).ln()
    }
}

/// Bayes classification of `sign(φ - μ)` from one release. Ties at zero
/// log-likelihood ratio resolve to +1 so transcripts are reproducible.
pub fn bayes_sign_classify(
    a: f64,
    mu: f64,
    noise: &NoiseSpec,
    sigma: f64,
) -> Result<i8, AdversaryError> {
    let loglr = log_likelihood_ratio(a, mu, noise, sigma)?;
    Ok(if loglr >= 0.0 { 1 } else { -1 })
}

/// Sign estimates for every completed round of a transcript.
pub fn estimate_signs(
    shared: &SharedTranscript,
    sigma: f64,
) -> Result<SignEstimate, AdversaryError> {
    let mut signs = Vec::with_capacity(shared.len());
    let mut loglrs = Vec::with_capacity(shared.len());
    for (round, r) in shared.rounds.iter().enumerate() {
        if !r.release.is_finite() {
            return Err(AdversaryError::NonFiniteRelease { round });
        }
        let loglr = log_likelihood_ratio(r.release, r.query.mean, &r.declared_noise, sigma)?;
        signs.push(if loglr >= 0.0 { 1 } else { -1 });
        loglrs.push(loglr);
    }
    Ok(SignEstimate { signs, per_round_loglr: loglrs })
}

/// Final-round selection of the sign adversary.
///
/// Requires the completed rounds to be independent with variance σ² (the
/// richness assumption provides such queries). The covariance vector is
/// `±(σ²/√(k-1))·ŝ`, oriented so the induced conditional bias and the
/// declared mean of the final noise share a sign; with a centered final
/// declaration the positive orientation is used.
pub fn select_bayes_final(
    shared: &SharedTranscript,
    sigma: f64,
    declared_zk_mean: f64,
) -> Result<(QuerySpec, SignEstimate), AdversaryError> {
    let m = shared.len();
    if m == 0 {
        return Err(AdversaryError::EmptyHistory);
    }
    let sigma_sq = sigma * sigma;
    let tol = PSD_TOL_REL * sigma_sq;
    for (i, round) in shared.rounds.iter().enumerate() {
        if (round.query.variance - sigma_sq).abs() > tol {
            return Err(AdversaryError::AssumptionViolation {
                detail: format!(
                    "round {i} variance {} differs from σ² = {sigma_sq}",
                    round.query.variance
                ),
            });
        }
        for (j, &c) in round.query.cov_with_history.iter().enumerate() {
            if c.abs() > tol {
                return Err(AdversaryError::AssumptionViolation {
                    detail: format!("cov({i},{j}) = {c} is not 0"),
                });
            }
        }
    }
    let est = estimate_signs(shared, sigma)?;
    let orient = if declared_zk_mean >= 0.0 { 1.0 } else { -1.0 };
    let scale = orient * sigma_sq / (m as f64).sqrt();
    let cov: Vec<f64> = est.signs.iter().map(|&s| scale * s as f64).collect();
    Ok((QuerySpec { mean: 0.0, variance: sigma_sq, cov_with_history: cov }, est))
}

// ── Policy objects for the game loop ────────────────────────────────────

/// A query selection protocol: sees the shared transcript and the noise
/// distribution already declared for the current round.
pub trait Adversary: Send {
    fn select(
        &mut self,
        shared: &SharedTranscript,
        declared: &NoiseSpec,
    ) -> Result<QuerySpec, AdversaryError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// Orthogonal queries in rounds 1..k-1, one-step least favorable at k.
    OrthogonalThenOneStep,
    /// Least-favorable construction at every round.
    KStepGreedy,
    /// Orthogonal queries, then the sign-aligned final query.
    BayesSign,
    /// Non-adaptive orthogonal queries in every round.
    FixedSequence,
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OrthogonalThenOneStep => write!(f, "orthogonal_then_one_step"),
            Self::KStepGreedy => write!(f, "k_step_greedy"),
            Self::BayesSign => write!(f, "bayes_sign"),
            Self::FixedSequence => write!(f, "fixed_sequence"),
        }
    }
}

/// Adversary configuration. `sigma` must equal the world's variance bound:
/// the adversary knows the data distribution.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub sigma: f64,
}

impl AdversaryConfig {
    pub fn build(&self, k: usize) -> Box<dyn Adversary> {
        match self.kind {
            AdversaryKind::FixedSequence => Box::new(Orthogonal { sigma: self.sigma }),
            AdversaryKind::OrthogonalThenOneStep => {
                Box::new(OneStepFinal { sigma: self.sigma, k })
            }
            AdversaryKind::KStepGreedy => {
                Box::new(Greedy { tracker: SharedTracker::new(self.sigma), sigma: self.sigma })
            }
            AdversaryKind::BayesSign => Box::new(BayesSign { sigma: self.sigma, k }),
        }
    }
}

struct Orthogonal {
    sigma: f64,
}

impl Adversary for Orthogonal {
    fn select(
        &mut self,
        shared: &SharedTranscript,
        _declared: &NoiseSpec,
    ) -> Result<QuerySpec, AdversaryError> {
        Ok(QuerySpec {
            mean: 0.0,
            variance: self.sigma * self.sigma,
            cov_with_history: vec![0.0; shared.len()],
        })
    }
}

struct OneStepFinal {
    sigma: f64,
    k: usize,
}

impl Adversary for OneStepFinal {
    fn select(
        &mut self,
        shared: &SharedTranscript,
        _declared: &NoiseSpec,
    ) -> Result<QuerySpec, AdversaryError> {
        if shared.len() + 1 < self.k {
            Ok(QuerySpec {
                mean: 0.0,
                variance: self.sigma * self.sigma,
                cov_with_history: vec![0.0; shared.len()],
            })
        } else {
            Ok(select_one_step(shared, self.sigma))
        }
    }
}

struct Greedy {
    tracker: SharedTracker,
    sigma: f64,
}

impl Adversary for Greedy {
    fn select(
        &mut self,
        shared: &SharedTranscript,
        _declared: &NoiseSpec,
    ) -> Result<QuerySpec, AdversaryError> {
        self.tracker.sync(shared);
        Ok(select_one_step_with(&self.tracker, shared, self.sigma))
    }
}

struct BayesSign {
    sigma: f64,
    k: usize,
}

impl Adversary for BayesSign {
    fn select(
        &mut self,
        shared: &SharedTranscript,
        declared: &NoiseSpec,
    ) -> Result<QuerySpec, AdversaryError> {
        if shared.len() + 1 < self.k || self.k < 2 {
            Ok(QuerySpec {
                mean: 0.0,
                variance: self.sigma * self.sigma,
                cov_with_history: vec![0.0; shared.len()],
            })
        } else {
            let (q, _) = select_bayes_final(shared, self.sigma, declared.declared_mean())?;
            Ok(q)
        }
    }
}
