//! Closed-form evaluators for the risk bounds and the conditional-expectation
//! recursion, used as reporting reference lines and as exact oracles in tests.
//!
//! All evaluators are pure arithmetic; Monte Carlo comparisons live in the
//! harness. Bounds that blow up as a noise level goes to zero return +∞ so
//! plotting code can stay total.

use std::fmt;

use crate::linalg::{dot, Cholesky, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub enum BoundsError {
    /// `λ + w² - v^T(Σ+W)^{-1}v` vanished: the peeled query is degenerate.
    DegenerateQuery { denominator: f64 },
    /// Σ+W could not be factored.
    SingularCovariance,
}

impl fmt::Display for BoundsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DegenerateQuery { denominator } => {
                write!(f, "degenerate query: recursion denominator {denominator:e}")
            }
            Self::SingularCovariance => write!(f, "Σ + W is singular"),
        }
    }
}

impl std::error::Error for BoundsError {}

/// Squared-bias bound for one-step adaptivity: `(k-1)σ⁴/w²`.
pub fn one_step_bias_sq_bound(k: usize, sigma: f64, w: f64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    if w == 0.0 {
        return f64::INFINITY;
    }
    (k - 1) as f64 * sigma.powi(4) / (w * w)
}

/// MSE bound for one-step adaptivity at the tuned level `w² = √(k-1)σ²`:
/// `(2√(k-1)+1)σ²`.
pub fn one_step_mse_bound(k: usize, sigma: f64) -> f64 {
    (2.0 * ((k.max(1) - 1) as f64).sqrt() + 1.0) * sigma * sigma
}

/// Attained expected squared bias of the orthogonal construction:
/// `(k-1)σ⁴/(w²+σ²)`.
pub fn sharpness_floor(k: usize, sigma: f64, w: f64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    (k - 1) as f64 * sigma.powi(4) / (w * w + sigma * sigma)
}

/// Expected supremum of squared conditional bias for fixed non-adaptive
/// queries with covariance eigenvalues `λ_i`: `σ² Σ λ_i/(λ_i+w²)`.
pub fn expected_sup_bias_sq(eigenvalues: &[f64], sigma: f64, w: f64) -> f64 {
    let mut sum = 0.0;
    for &l in eigenvalues {
        if l > 0.0 {
            sum += l / (l + w * w);
        }
    }
    sigma * sigma * sum
}

/// One peel of the conditional-expectation recursion: the exact conditional
/// expectation of the bias quadratic after integrating out the newest
/// release,
///
/// `f_prev + (λ + v^T Ω v - 2 v^T(Σ+W)^{-1}v) / (λ + w² - v^T(Σ+W)^{-1}v)`
///
/// with `Ω = (Σ+W)^{-1} Σ (Σ+W)^{-1}` and `w²` the noise variance of the
/// round being integrated out. The correction term is the bottom-right entry
/// of the bordered quadratic-form matrix times the conditional variance of
/// the new release; the quadratic evaluated at the conditional mean
/// reproduces `f_prev` exactly, so nothing else survives.
pub fn recursive_fk_update(
    f_prev: f64,
    sigma_mat: &SymMatrix,
    w_diag: &[f64],
    v: &[f64],
    lambda: f64,
    w_sq: f64,
) -> Result<f64, BoundsError> {
    assert_eq!(sigma_mat.dim(), w_diag.len());
    assert_eq!(sigma_mat.dim(), v.len());
    let dim = sigma_mat.dim();
    let (v_omega_v, v_sw_v) = if dim == 0 {
        (0.0, 0.0)
    } else {
        let mut sw = sigma_mat.clone();
        for i in 0..dim {
            sw.set(i, i, sw.get(i, i) + w_diag[i]);
        }
        let chol = Cholesky::factor(&sw).map_err(|_| BoundsError::SingularCovariance)?;
        let a = chol.solve(v); // (Σ+W)^{-1} v
        (sigma_mat.quad_form(&a), dot(v, &a))
    };
    let denom = lambda + w_sq - v_sw_v;
    if denom <= 1e-12 {
        return Err(BoundsError::DegenerateQuery { denominator: denom });
    }
    Ok(f_prev + (lambda + v_omega_v - 2.0 * v_sw_v) / denom)
}

/// Squared-bias bound for k-step adaptivity: `σ⁴ Σ_{i<k} (1/w_i² + σ²/w_i⁴)`
/// over the first k-1 schedule entries.
pub fn k_step_bias_sq_bound(sigma: f64, w_schedule: &[f64]) -> f64 {
    let k = w_schedule.len();
    if k <= 1 {
        return 0.0;
    }
    let mut sum = 0.0;
    for &w in &w_schedule[..k - 1] {
        if w == 0.0 {
            return f64::INFINITY;
        }
        let w2 = w * w;
        sum += 1.0 / w2 + sigma * sigma / (w2 * w2);
    }
    sigma.powi(4) * sum
}

/// MSE bound for k-step adaptivity at the tuned schedule: `2(√(k-1)+1)σ²`.
pub fn k_step_mse_bound(k: usize, sigma: f64) -> f64 {
    2.0 * (((k.max(1) - 1) as f64).sqrt() + 1.0) * sigma * sigma
}

/// Minimax lower bound `√(k-1)σ²/(2√3)`. Needs k ≥ 2 (the construction uses
/// k-1 independent rounds); smaller k returns 0.
pub fn minimax_lower_bound(k: usize, sigma: f64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    ((k - 1) as f64).sqrt() * sigma * sigma / (2.0 * 3.0_f64.sqrt())
}

/// Reference lines for one experiment configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundReport {
    pub one_step_bias_sq: f64,
    pub one_step_mse: f64,
    pub k_step_bias_sq: f64,
    pub k_step_mse: f64,
    pub minimax_lower: f64,
    pub sharpness_floor: f64,
}

impl BoundReport {
    /// Evaluates every bound for round count `k`, variance bound `σ²`, and a
    /// noise schedule; one-step bounds use the first-round noise level.
    pub fn evaluate(k: usize, sigma: f64, w_schedule: &[f64]) -> Self {
        let w1 = w_schedule.first().copied().unwrap_or(0.0);
        BoundReport {
            one_step_bias_sq: one_step_bias_sq_bound(k, sigma, w1),
            one_step_mse: one_step_mse_bound(k, sigma),
            k_step_bias_sq: k_step_bias_sq_bound(sigma, w_schedule),
            k_step_mse: k_step_mse_bound(k, sigma),
            minimax_lower: minimax_lower_bound(k, sigma),
            sharpness_floor: sharpness_floor(k, sigma, w1),
        }
    }
}

/// Closed-form block inverse of `[[Σ+W, v], [v^T, λ+w²]]` from the recursion
/// proof, exposed for the identity test: returns the four blocks
/// `(TL, tr, α)` with `α = (λ+w² - v^T(Σ+W)^{-1}v)^{-1}`,
/// `tr = -α(Σ+W)^{-1}v`, `TL = (Σ+W)^{-1} + α (Σ+W)^{-1}v v^T(Σ+W)^{-1}`.
pub fn block_inverse_sw(
    sigma_mat: &SymMatrix,
    w_diag: &[f64],
    v: &[f64],
    lambda: f64,
    w_sq: f64,
) -> Result<(SymMatrix, Vec<f64>, f64), BoundsError> {
    let dim = sigma_mat.dim();
    let mut sw = sigma_mat.clone();
    for i in 0..dim {
        sw.set(i, i, sw.get(i, i) + w_diag[i]);
    }
    let chol = Cholesky::factor(&sw).map_err(|_| BoundsError::SingularCovariance)?;
    let a = chol.solve(v);
    let denom = lambda + w_sq - dot(v, &a);
    if denom.abs() <= 1e-14 {
        return Err(BoundsError::DegenerateQuery { denominator: denom });
    }
    let alpha = 1.0 / denom;
    let inv = sw.inverse().map_err(|_| BoundsError::SingularCovariance)?;
    let mut tl = inv.clone();
    for i in 0..dim {
        for j in 0..dim {
            tl.set(i, j, inv.get(i, j) + alpha * a[i] * a[j]);
        }
    }
    let tr: Vec<f64> = a.iter().map(|ai| -alpha * ai).collect();
    Ok((tl, tr, alpha))
}
