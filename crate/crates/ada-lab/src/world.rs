//! The Gaussian query world and the game transcript.
//!
//! Queries live in a class `T` whose statistic values `(φ_t : t ∈ T)` form a
//! Gaussian process with `Var(φ_t) ≤ σ²`. Selecting a query means choosing its
//! mean, its variance, and its covariance vector against everything selected
//! so far; the world then draws the realized value from the exact conditional
//! normal given the already-realized statistics.
//!
//! The transcript is split into what both sides see ([`SharedTranscript`]) and
//! what only the player sees ([`PrivateTranscript`]). Adversary code receives
//! only the shared half; the type split is the information firewall.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dot, Cholesky, SymMatrix};
use crate::mechanisms::NoiseSpec;
use crate::rngs::{self, Purpose};

/// Diagonal jitter added to Σ before factoring, relative to σ²: the
/// least-favorable adversary intentionally drives conditional variance to 0,
/// leaving Σ on the PSD boundary.
pub const JITTER_REL: f64 = 1e-10;

/// PSD feasibility tolerance for new queries, relative to σ².
pub const PSD_TOL_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum WorldError {
    /// Query's covariance vector is infeasible against the current world:
    /// `v^T Σ^{-1} v` exceeds the declared variance beyond tolerance.
    RejectedQuery { excess: f64 },
    /// Covariance vector length does not match the number of past rounds.
    DimensionMismatch { expected: usize, actual: usize },
    /// Query variance is negative or exceeds σ².
    VarianceOutOfRange { variance: f64, sigma_sq: f64 },
    /// Linear query direction exceeds the unit ball.
    QueryNormTooLarge { norm: f64 },
    /// A non-finite value reached the world.
    NonFinite,
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::RejectedQuery { excess } => {
                write!(f, "query rejected: covariance violates PSD feasibility by {excess:e}")
            }
            Self::DimensionMismatch { expected, actual } => {
                write!(f, "covariance vector has length {actual}, expected {expected}")
            }
            Self::VarianceOutOfRange { variance, sigma_sq } => {
                write!(f, "query variance {variance} outside [0, {sigma_sq}]")
            }
            Self::QueryNormTooLarge { norm } => {
                write!(f, "linear query norm {norm} exceeds 1")
            }
            Self::NonFinite => write!(f, "non-finite value"),
        }
    }
}

impl std::error::Error for WorldError {}

/// One selected query: mean `μ_t`, variance `Var(φ_t)`, and covariance vector
/// `Σ_{i,1:i-1}` against the queries already selected.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuerySpec {
    pub mean: f64,
    pub variance: f64,
    pub cov_with_history: Vec<f64>,
}

impl QuerySpec {
    /// Unconditional query: no covariance with the past.
    pub fn unconditional(mean: f64, variance: f64) -> Self {
        QuerySpec { mean, variance, cov_with_history: Vec::new() }
    }
}

/// Joint law and realized values of the statistics selected so far.
///
/// `cov`/`means` define the Gaussian law of `φ_{T_{1:i}}`; `realized` holds
/// the values drawn for this replication. Values are immutable once drawn:
/// each round produces a new state.
#[derive(Debug, Clone)]
pub struct GaussianWorldState {
    pub sigma_max: f64,
    pub cov: SymMatrix,
    pub means: Vec<f64>,
    pub realized: Vec<f64>,
    pub rng_seed: u64,
    chol: Cholesky,
}

/// Exact conditional law of a candidate query's value given the realized past.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianWorldState {
    pub fn new(sigma_max: f64, rng_seed: u64) -> Self {
        assert!(sigma_max > 0.0, "sigma_max must be positive");
        GaussianWorldState {
            sigma_max,
            cov: SymMatrix::empty(),
            means: Vec::new(),
            realized: Vec::new(),
            rng_seed,
            chol: Cholesky::empty(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.realized.len()
    }

    fn jitter(&self) -> f64 {
        JITTER_REL * self.sigma_max * self.sigma_max
    }

    /// Validates a query against the PSD invariant and the variance cap.
    pub fn validate_query(&self, q: &QuerySpec) -> Result<(), WorldError> {
        if !q.mean.is_finite() || !q.variance.is_finite() {
            return Err(WorldError::NonFinite);
        }
        let sigma_sq = self.sigma_max * self.sigma_max;
        let tol = PSD_TOL_REL * sigma_sq;
        if q.variance < -tol || q.variance > sigma_sq + tol {
            return Err(WorldError::VarianceOutOfRange { variance: q.variance, sigma_sq });
        }
        if q.cov_with_history.len() != self.rounds() {
            return Err(WorldError::DimensionMismatch {
                expected: self.rounds(),
                actual: q.cov_with_history.len(),
            });
        }
        // Schur complement of the jittered factor; must stay above -tol.
        let pivot = self.chol.extension_pivot(&q.cov_with_history, q.variance);
        if pivot < -tol {
            return Err(WorldError::RejectedQuery { excess: -pivot });
        }
        Ok(())
    }

    /// Conditional law of the candidate's value given realized history:
    /// `N(μ_q + v^T Σ^{-1}(φ-μ), λ - v^T Σ^{-1} v)`.
    pub fn conditional_law(&self, q: &QuerySpec) -> Result<ConditionalLaw, WorldError> {
        self.validate_query(q)?;
        if self.rounds() == 0 {
            return Ok(ConditionalLaw { mean: q.mean, variance: q.variance.max(0.0) });
        }
        let y = self.chol.solve_lower(&q.cov_with_history);
        let deviations: Vec<f64> =
            self.realized.iter().zip(&self.means).map(|(p, m)| p - m).collect();
        let z = self.chol.solve_lower(&deviations);
        let mean = q.mean + dot(&y, &z);
        let variance = (q.variance - dot(&y, &y)).max(0.0);
        Ok(ConditionalLaw { mean, variance })
    }

    /// Draws the candidate's value from its conditional law and returns the
    /// extended world. Deterministic given `rng_seed` and the draw index.
    pub fn extend(mut self, q: QuerySpec) -> Result<Self, WorldError> {
        let law = self.conditional_law(&q)?;
        let draw_index = self.rounds() as u64;
        let mut rng = rngs::stream(self.rng_seed, 0, draw_index, Purpose::Statistic);
        let xi: f64 = rng.sample(StandardNormal);
        let value = law.mean + law.variance.sqrt() * xi;

        self.cov.extend(&q.cov_with_history, q.variance);
        self.chol
            .extend(&q.cov_with_history, q.variance + self.jitter(), self.jitter())
            .expect("jittered extension cannot fail after validation");
        self.means.push(q.mean);
        self.realized.push(value);
        Ok(self)
    }
}

/// Standalone form of the conditional draw, mirroring the state method for
/// callers that hold the pieces separately.
pub fn extend_world(state: GaussianWorldState, q: QuerySpec) -> Result<GaussianWorldState, WorldError> {
    state.extend(q)
}

// ── Transcripts ─────────────────────────────────────────────────────────

/// One round as both sides see it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SharedRound {
    pub query: QuerySpec,
    pub declared_noise: NoiseSpec,
    pub release: f64,
}

/// The shared history `H_i`: selected queries, declared noise distributions,
/// and released values. This is everything the adversary may read.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SharedTranscript {
    pub rounds: Vec<SharedRound>,
}

impl SharedTranscript {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// Residuals `A_i - μ_{T_i}` of all completed rounds.
    pub fn residuals(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.release - r.query.mean).collect()
    }

    /// Declared noise variances of all completed rounds.
    pub fn noise_variances(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.declared_noise.variance()).collect()
    }
}

/// One round as only the player sees it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivateRound {
    pub noise_value: f64,
    pub phi: f64,
}

/// Realized noise and statistic values; player-private.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PrivateTranscript {
    pub rounds: Vec<PrivateRound>,
}

/// Full game transcript: the shared half plus the player-private half.
///
/// Invariant: `shared.rounds[i].release == player_private.rounds[i].phi +
/// player_private.rounds[i].noise_value` bit-exactly, and both halves have
/// equal length.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GameHistory {
    pub shared: SharedTranscript,
    pub player_private: PrivateTranscript,
}

impl GameHistory {
    pub fn len(&self) -> usize {
        self.shared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.is_empty()
    }

    pub fn push_round(&mut self, query: QuerySpec, declared: NoiseSpec, phi: f64, noise: f64) {
        let release = phi + noise;
        self.shared.rounds.push(SharedRound { query, declared_noise: declared, release });
        self.player_private.rounds.push(PrivateRound { noise_value: noise, phi });
    }

    /// Checks the reconstruction identity `A_i - Z_i = φ_i` bit-exactly.
    pub fn reconstruction_holds(&self) -> bool {
        self.shared.len() == self.player_private.rounds.len()
            && self
                .shared
                .rounds
                .iter()
                .zip(&self.player_private.rounds)
                .all(|(s, p)| s.release == p.phi + p.noise_value)
    }
}

// ── Linear query world (finite-dimensional example) ─────────────────────

/// Concrete query world over a d×n data matrix with independent
/// `N(0, feature_sd²)` features: queries are unit directions `t`, statistics
/// are the column-averaged projections `(1/n) Σ_i ⟨t, X_i⟩`.
#[derive(Debug, Clone)]
pub struct LinearQueryWorld {
    pub d: usize,
    pub n: usize,
    pub feature_sd: f64,
    /// Row-major d×n.
    pub data: Vec<f64>,
    issued: Vec<Vec<f64>>,
}

impl LinearQueryWorld {
    /// Samples a fresh dataset with independent `N(0, feature_sd²)` entries.
    pub fn sample(d: usize, n: usize, feature_sd: f64, seed: u64) -> Self {
        let mut data = vec![0.0; d * n];
        for row in 0..d {
            let mut rng = rngs::stream(seed, row as u64, 0, Purpose::Data);
            for col in 0..n {
                let z: f64 = rng.sample(StandardNormal);
                data[row * n + col] = feature_sd * z;
            }
        }
        LinearQueryWorld { d, n, feature_sd, data, issued: Vec::new() }
    }

    pub fn from_data(d: usize, n: usize, feature_sd: f64, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), d * n);
        LinearQueryWorld { d, n, feature_sd, data, issued: Vec::new() }
    }

    /// Evaluates the linear statistic for direction `t` (requires `‖t‖₂ ≤ 1`)
    /// and returns its query description against all previously issued
    /// directions together with the realized value.
    pub fn linear_query(&mut self, t: &[f64]) -> Result<(QuerySpec, f64), WorldError> {
        if t.len() != self.d {
            return Err(WorldError::DimensionMismatch { expected: self.d, actual: t.len() });
        }
        let norm = dot(t, t).sqrt();
        if norm > 1.0 + 1e-9 {
            return Err(WorldError::QueryNormTooLarge { norm });
        }
        let scale = self.feature_sd * self.feature_sd / self.n as f64;
        let variance = dot(t, t) * scale;
        let cov: Vec<f64> = self.issued.iter().map(|prev| dot(t, prev) * scale).collect();

        let mut realized = 0.0;
        for col in 0..self.n {
            let mut proj = 0.0;
            for row in 0..self.d {
                proj += t[row] * self.data[row * self.n + col];
            }
            realized += proj;
        }
        realized /= self.n as f64;

        self.issued.push(t.to_vec());
        Ok((QuerySpec { mean: 0.0, variance, cov_with_history: cov }, realized))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::NoiseSpec;

    fn sigma_one_world(seed: u64) -> GaussianWorldState {
        GaussianWorldState::new(1.0, seed)
    }

    #[test]
    fn unconditional_draw_is_reproducible() {
        let q = QuerySpec::unconditional(0.0, 1.0);
        let a = sigma_one_world(9).extend(q.clone()).unwrap();
        let b = sigma_one_world(9).extend(q).unwrap();
        assert_eq!(a.realized[0].to_bits(), b.realized[0].to_bits());
        assert!(a.realized[0].is_finite());
    }

    #[test]
    fn independent_query_keeps_its_mean() {
        // Zero covariance and zero variance: realized value equals the mean.
        let state = sigma_one_world(1).extend(QuerySpec::unconditional(0.0, 1.0)).unwrap();
        let q = QuerySpec { mean: 2.5, variance: 0.0, cov_with_history: vec![0.0] };
        let law = state.conditional_law(&q).unwrap();
        assert_eq!(law.mean, 2.5);
        assert_eq!(law.variance, 0.0);
        let state = state.extend(q).unwrap();
        assert!((state.realized[1] - 2.5).abs() < 1e-6);
    }

    #[test]
    fn zero_deviation_history_gives_conditional_mean_equal_query_mean() {
        let mut state = sigma_one_world(3);
        state.cov.extend(&[], 1.0);
        state.chol.extend(&[], 1.0, 0.0).unwrap();
        state.means.push(0.7);
        state.realized.push(0.7); // φ₁ = μ₁ exactly
        let q = QuerySpec { mean: -0.4, variance: 1.0, cov_with_history: vec![0.5] };
        let law = state.conditional_law(&q).unwrap();
        assert!((law.mean - -0.4).abs() < 1e-12);
    }

    #[test]
    fn boundary_query_has_zero_conditional_variance() {
        let state = sigma_one_world(5)
            .extend(QuerySpec::unconditional(0.0, 1.0))
            .unwrap()
            .extend(QuerySpec { mean: 0.0, variance: 1.0, cov_with_history: vec![0.0] })
            .unwrap();
        // v with v^T Σ^{-1} v = λ exactly: v = (a, b) with a² + b² = 1.
        let q = QuerySpec {
            mean: 0.3,
            variance: 1.0,
            cov_with_history: vec![0.6, 0.8],
        };
        let law = state.conditional_law(&q).unwrap();
        assert!(law.variance.abs() < 1e-9);
        let expected = 0.3 + 0.6 * state.realized[0] + 0.8 * state.realized[1];
        let state = state.extend(q).unwrap();
        assert!((state.realized[2] - expected).abs() < 1e-4);
    }

    #[test]
    fn infeasible_covariance_is_rejected() {
        let state = sigma_one_world(2).extend(QuerySpec::unconditional(0.0, 1.0)).unwrap();
        let q = QuerySpec { mean: 0.0, variance: 0.5, cov_with_history: vec![0.9] };
        let err = state.validate_query(&q).unwrap_err();
        assert!(matches!(err, WorldError::RejectedQuery { .. }));
    }

    #[test]
    fn variance_above_sigma_sq_is_rejected() {
        let state = sigma_one_world(2);
        let err = state.validate_query(&QuerySpec::unconditional(0.0, 1.5)).unwrap_err();
        assert!(matches!(err, WorldError::VarianceOutOfRange { .. }));
    }

    #[test]
    fn reconstruction_identity_is_bit_exact() {
        let mut h = GameHistory::default();
        for i in 0..5 {
            let phi = 0.1 * i as f64 + 0.037;
            let z = -0.3 + 0.21 * i as f64;
            h.push_round(QuerySpec::unconditional(0.0, 1.0), NoiseSpec::gaussian(0.0, 1.0), phi, z);
        }
        assert!(h.reconstruction_holds());
        assert_eq!(h.shared.len(), h.player_private.rounds.len());
    }

    // Conditional-chain sampling must reproduce the joint law N(μ, Σ):
    // two-sample KS on the last coordinate against direct Cholesky sampling.
    #[test]
    fn conditional_chain_matches_direct_joint_sampling() {
        use rand::Rng;
        let reps = 100_000;
        let specs = [
            QuerySpec { mean: 0.2, variance: 1.0, cov_with_history: vec![] },
            QuerySpec { mean: -0.5, variance: 0.8, cov_with_history: vec![0.4] },
            QuerySpec { mean: 0.0, variance: 0.9, cov_with_history: vec![-0.3, 0.5] },
        ];
        let mut chain = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut state = GaussianWorldState::new(1.0, rngs::world_seed(11, rep as u64));
            for q in &specs {
                state = state.extend(q.clone()).unwrap();
            }
            chain.push(state.realized[2]);
        }

        // Direct route: hand-rolled Cholesky of the full 3×3 covariance,
        // independent of the incremental factor under test.
        let full = [
            [1.0, 0.4, -0.3],
            [0.4, 0.8, 0.5],
            [-0.3, 0.5, 0.9],
        ];
        let mut l = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = full[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
            }
        }
        let means = [0.2, -0.5, 0.0];
        let mut direct = Vec::with_capacity(reps);
        let mut rng = rngs::stream(1234, 0, 0, Purpose::Statistic);
        for _ in 0..reps {
            let xi: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            direct.push(means[2] + l[2][0] * xi[0] + l[2][1] * xi[1] + l[2][2] * xi[2]);
        }

        let d = ks_statistic(&mut chain, &mut direct);
        let p = ks_p_value(d, reps as f64, reps as f64);
        assert!(p > 0.01, "KS p-value {p} (D = {d})");
    }

    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (n, m) = (a.len(), b.len());
        let (mut i, mut j) = (0usize, 0usize);
        let mut d: f64 = 0.0;
        while i < n && j < m {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / n as f64;
            let fb = j as f64 / m as f64;
            d = d.max((fa - fb).abs());
        }
        d
    }

    fn ks_p_value(d: f64, n: f64, m: f64) -> f64 {
        let lambda = (n * m / (n + m)).sqrt() * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
            p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn linear_query_zero_direction() {
        let mut w = LinearQueryWorld::sample(3, 50, 1.0, 4);
        let (q, realized) = w.linear_query(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(realized, 0.0);
        assert_eq!(q.variance, 0.0);
    }

    #[test]
    fn linear_query_first_basis_vector_variance() {
        let mut w = LinearQueryWorld::sample(2, 100, 1.0, 4);
        let (q, _) = w.linear_query(&[1.0, 0.0]).unwrap();
        assert!((q.variance - 0.01).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_directions_have_zero_covariance() {
        let mut w = LinearQueryWorld::sample(3, 40, 2.0, 8);
        let _ = w.linear_query(&[1.0, 0.0, 0.0]).unwrap();
        let (q2, _) = w.linear_query(&[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(q2.cov_with_history, vec![0.0]);
    }

    #[test]
    fn overlong_direction_is_rejected() {
        let mut w = LinearQueryWorld::sample(2, 10, 1.0, 4);
        let err = w.linear_query(&[1.0, 0.5]).unwrap_err();
        assert!(matches!(err, WorldError::QueryNormTooLarge { .. }));
    }

    // Independent features satisfy the joint-Gaussian assumption: orthonormal
    // directions give empirically uncorrelated statistics.
    #[test]
    fn orthonormal_queries_are_empirically_uncorrelated() {
        let reps = 4096;
        let mut xs = Vec::with_capacity(reps);
        let mut ys = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut w = LinearQueryWorld::sample(4, 25, 1.0, rngs::world_seed(77, rep as u64));
            let (_, x) = w.linear_query(&[1.0, 0.0, 0.0, 0.0]).unwrap();
            let (_, y) = w.linear_query(&[0.0, 1.0, 0.0, 0.0]).unwrap();
            xs.push(x);
            ys.push(y);
        }
        let mx = xs.iter().sum::<f64>() / reps as f64;
        let my = ys.iter().sum::<f64>() / reps as f64;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for i in 0..reps {
            sxy += (xs[i] - mx) * (ys[i] - my);
            sxx += (xs[i] - mx) * (xs[i] - mx);
            syy += (ys[i] - my) * (ys[i] - my);
        }
        let rho = sxy / (sxx * syy).sqrt();
        assert!(rho.abs() < 4.0 / (reps as f64).sqrt(), "rho {rho}");
    }
}
