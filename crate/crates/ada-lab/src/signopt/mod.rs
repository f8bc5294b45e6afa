//! Optimal sign obfuscation.
//!
//! A zero-mean signal `X ~ N(0, σ²)` is released as `X + Z`; the Bayes
//! classifier estimates `sign(X)` from the release. The margin risk
//! `E[ŝX]` measures how much sign information survives. Everything here is
//! built around the identity
//!
//! ```text
//! E[ŝX] = ½ ∫ |(Ap)(z)| dz,   (Ap)(z) = ∫ k(u - z) p(u) du,
//! k(s) = s·√(2/π)/σ·exp(-s²/(2σ²)),
//! ```
//!
//! so the noise distribution `p` that best hides the sign solves a variational
//! L1 minimization over zero-mean distributions with variance at most `w²`.
//! This module evaluates the operator `A`, the margin functional, the
//! piecewise lower bound, the discretized linear program for the optimal `p`,
//! and the closed-form dual certificate that bounds the LP optimum from below.

pub(crate) mod lp;

use std::fmt;

use crate::mathx::normal_cdf;

pub use lp::{LpError, LpSolution};

/// Kernel support radius in units of σ: mass of `|k|` beyond `8.5σ` is below
/// 2e-16 of the total, comfortably below the 1e-10 truncation budget.
const TAIL_SIGMAS: f64 = 8.5;

/// Reference quadrature resolution for the margin functional (`Ap` is
/// σ-smooth, so σ/32 puts the trapezoid error near 1e-4 relative).
const MARGIN_SPACING_SIGMAS: f64 = 1.0 / 32.0;

/// Output-grid resolution for the LP objective; coarser than the reference
/// functional since the LP only has to rank candidate distributions.
const LP_OUT_SPACING_SIGMAS: f64 = 1.0 / 16.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SignOptError {
    /// Grid spacing too coarse for the operator quadrature.
    ResolutionTooCoarse { spacing: f64, limit: f64 },
    /// Grid does not cover the domain the problem needs.
    GridTooSmall { required: f64, got: f64 },
    /// Malformed grid or weights.
    InvalidGrid { detail: String },
    /// Distribution fails the zero-mean requirement.
    MeanNotZero { mean: f64 },
    /// Integration domain would lose more than the truncation budget.
    TruncationLoss { fraction: f64 },
    /// No distribution on the grid satisfies the constraints.
    Infeasible { detail: String },
    /// The certificate branch needs w ≥ σ.
    BranchRequiresLargeNoise { sigma: f64, w: f64 },
    /// LP solver failure.
    Solver(LpError),
    /// Parameter out of range.
    InvalidParameter { detail: String },
}

impl fmt::Display for SignOptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ResolutionTooCoarse { spacing, limit } => {
                write!(f, "grid spacing {spacing} exceeds σ/4 = {limit}")
            }
            Self::GridTooSmall { required, got } => {
                write!(f, "grid half-width {got} below required {required}")
            }
            Self::InvalidGrid { detail } => write!(f, "invalid grid: {detail}"),
            Self::MeanNotZero { mean } => write!(f, "distribution mean {mean:e} is not 0"),
            Self::TruncationLoss { fraction } => {
                write!(f, "domain truncation loses {fraction:e} of mass")
            }
            Self::Infeasible { detail } => write!(f, "infeasible: {detail}"),
            Self::BranchRequiresLargeNoise { sigma, w } => {
                write!(f, "certificate needs w ≥ σ (σ = {sigma}, w = {w})")
            }
            Self::Solver(e) => write!(f, "LP solver: {e}"),
            Self::InvalidParameter { detail } => write!(f, "{detail}"),
        }
    }
}

impl std::error::Error for SignOptError {}

impl From<LpError> for SignOptError {
    fn from(e: LpError) -> Self {
        SignOptError::Solver(e)
    }
}

// ── Discretized distributions ───────────────────────────────────────────

/// A probability distribution supported on a uniform grid: nonnegative
/// weights over `n_points` equally spaced atoms in `[grid_min, grid_max]`,
/// normalized to total mass one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DiscretizedDistribution {
    pub grid_min: f64,
    pub grid_max: f64,
    pub n_points: usize,
    pub weights: Vec<f64>,
}

impl DiscretizedDistribution {
    pub fn new(grid_min: f64, grid_max: f64, weights: Vec<f64>) -> Result<Self, SignOptError> {
        let n_points = weights.len();
        if n_points == 0 {
            return Err(SignOptError::InvalidGrid { detail: "no weights".into() });
        }
        if n_points == 1 && grid_min != grid_max {
            return Err(SignOptError::InvalidGrid {
                detail: "single atom needs grid_min == grid_max".into(),
            });
        }
        if n_points > 1 && !(grid_min < grid_max) {
            return Err(SignOptError::InvalidGrid { detail: "grid_min must be < grid_max".into() });
        }
        let mut w = weights;
        let mut sum = 0.0;
        for x in w.iter_mut() {
            if !x.is_finite() || *x < -1e-12 {
                return Err(SignOptError::InvalidGrid { detail: format!("bad weight {x}") });
            }
            if *x < 0.0 {
                *x = 0.0;
            }
            sum += *x;
        }
        if sum <= 0.0 {
            return Err(SignOptError::InvalidGrid { detail: "weights sum to 0".into() });
        }
        for x in w.iter_mut() {
            *x /= sum;
        }
        Ok(DiscretizedDistribution { grid_min, grid_max, n_points, weights: w })
    }

    /// Point mass at zero.
    pub fn point_mass_at_zero() -> Self {
        DiscretizedDistribution { grid_min: 0.0, grid_max: 0.0, n_points: 1, weights: vec![1.0] }
    }

    /// Trapezoid discretization of `U([-√3w, √3w])` (variance w²) on
    /// `n_points` atoms.
    pub fn uniform(w: f64, n_points: usize) -> Result<Self, SignOptError> {
        if w <= 0.0 {
            return Ok(Self::point_mass_at_zero());
        }
        if n_points < 3 {
            return Err(SignOptError::InvalidGrid { detail: "uniform needs ≥ 3 points".into() });
        }
        let half = 3.0_f64.sqrt() * w;
        let mut weights = vec![1.0; n_points];
        weights[0] = 0.5;
        weights[n_points - 1] = 0.5;
        Self::new(-half, half, weights)
    }

    pub fn spacing(&self) -> f64 {
        if self.n_points <= 1 {
            0.0
        } else {
            (self.grid_max - self.grid_min) / (self.n_points - 1) as f64
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        if self.n_points == 1 {
            self.grid_min
        } else {
            self.grid_min + self.spacing() * j as f64
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.point(j))
    }

    pub fn mean(&self) -> f64 {
        self.points().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.points().zip(&self.weights).map(|(x, w)| (x - m) * (x - m) * w).sum()
    }

    /// Inverse-CDF draw from a uniform variate in [0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.points().zip(&self.weights) {
            acc += w;
            if u < acc {
                return x;
            }
        }
        self.point(self.n_points - 1)
    }

    /// Total-variation distance to the uniform distribution on
    /// `[-√3w, √3w]` discretized on this grid.
    pub fn tv_distance_to_uniform(&self, w: f64) -> f64 {
        let half = 3.0_f64.sqrt() * w;
        let mut unif: Vec<f64> = self.points().map(|x| if x.abs() <= half { 1.0 } else { 0.0 }).collect();
        let s: f64 = unif.iter().sum();
        for u in unif.iter_mut() {
            *u /= s;
        }
        0.5 * self.weights.iter().zip(&unif).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

// ── The smoothing operator ──────────────────────────────────────────────

/// Odd convolution kernel `k(s) = s·√(2/π)/σ·e^{-s²/(2σ²)}`.
pub(crate) fn kernel(s: f64, sigma: f64) -> f64 {
    s * (2.0 / std::f64::consts::PI).sqrt() / sigma * (-0.5 * s * s / (sigma * sigma)).exp()
}

/// Uniform evaluation grid for function-valued operator application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        UniformGrid { min, max, n }
    }

    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + self.spacing() * i as f64
    }

    /// Index range at least `radius` away from both grid ends.
    pub fn interior(&self, radius: f64) -> std::ops::Range<usize> {
        let h = self.spacing();
        let lo = (radius / h).ceil() as usize;
        let hi = self.n - lo.min(self.n);
        lo..hi
    }
}

// 12-point Gauss-Legendre rule on [-1, 1].
const GL_NODES: [f64; 6] = [
    0.1252334085114689,
    0.3678314989981802,
    0.5873179542866175,
    0.7699026741943047,
    0.9041172563704749,
    0.9815606342467192,
];
const GL_WEIGHTS: [f64; 6] = [
    0.2491470458134028,
    0.2334925365383548,
    0.2031674267230659,
    0.1600783285433462,
    0.1069393259953184,
    0.0471753363865118,
];

// Cubic Lagrange interpolation of grid samples; 0 outside the grid.
fn interp_cubic(f: &[f64], grid: &UniformGrid, u: f64) -> f64 {
    if u < grid.min || u > grid.max {
        return 0.0;
    }
    let h = grid.spacing();
    let t = (u - grid.min) / h;
    let base = (t.floor() as isize - 1).clamp(0, grid.n as isize - 4) as usize;
    let xi = t - base as f64;
    let l0 = -(xi - 1.0) * (xi - 2.0) * (xi - 3.0) / 6.0;
    let l1 = xi * (xi - 2.0) * (xi - 3.0) / 2.0;
    let l2 = -xi * (xi - 1.0) * (xi - 3.0) / 2.0;
    let l3 = xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    l0 * f[base] + l1 * f[base + 1] + l2 * f[base + 2] + l3 * f[base + 3]
}

/// Applies the operator to a function sampled on a grid:
///
/// `(Af)(x) = ∫₀^{8σ} t·[f(x+t) - f(x-t)]·√(2/π)/σ·e^{-t²/(2σ²)} dt`
///
/// by panel Gauss-Legendre in `t` with cubic interpolation of `f` (exact for
/// cubics, so the polynomial identities hold to quadrature precision).
/// Outside the grid `f` is treated as zero, so only points at least `8σ`
/// from the ends carry the untruncated operator value.
pub fn operator_a_apply(
    f: &[f64],
    grid: &UniformGrid,
    sigma: f64,
) -> Result<Vec<f64>, SignOptError> {
    if grid.n != f.len() || grid.n < 4 {
        return Err(SignOptError::InvalidGrid {
            detail: format!("{} samples on a {}-point grid", f.len(), grid.n),
        });
    }
    if sigma <= 0.0 {
        return Err(SignOptError::InvalidParameter { detail: format!("sigma {sigma} ≤ 0") });
    }
    let h = grid.spacing();
    if h > sigma / 4.0 {
        return Err(SignOptError::ResolutionTooCoarse { spacing: h, limit: sigma / 4.0 });
    }
    let q_scale = (2.0 / std::f64::consts::PI).sqrt() / sigma;
    let panels = 16usize;
    let panel_w = 8.0 * sigma / panels as f64;
    // Precompute (t, combined weight) pairs once.
    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(panels * 12);
    for p in 0..panels {
        let a = p as f64 * panel_w;
        let c = a + 0.5 * panel_w;
        let half = 0.5 * panel_w;
        for i in 0..6 {
            for sgn in [-1.0, 1.0] {
                let t = c + sgn * half * GL_NODES[i];
                let wt = half * GL_WEIGHTS[i] * t * q_scale * (-0.5 * t * t / (sigma * sigma)).exp();
                nodes.push((t, wt));
            }
        }
    }
    let mut out = vec![0.0; grid.n];
    for (idx, o) in out.iter_mut().enumerate() {
        let x = grid.point(idx);
        let mut acc = 0.0;
        for &(t, wt) in &nodes {
            acc += wt * (interp_cubic(f, grid, x + t) - interp_cubic(f, grid, x - t));
        }
        *o = acc;
    }
    Ok(out)
}

// ── Margin risk ─────────────────────────────────────────────────────────

/// Margin risk `E[ŝX] = ½‖Ap‖₁` of the Bayes sign classifier against
/// tabulated noise `p` and signal `N(0, σ²)`.
///
/// `Ap` is evaluated exactly for the atomic measure (`(Ap)(z) = Σ_j w_j
/// k(x_j - z)`) on a z-grid with spacing σ/16 extending `8.5σ` beyond the
/// support, and integrated with a trapezoid rule that treats sign-change
/// cells piecewise-linearly.
pub fn margin_risk(p: &DiscretizedDistribution, sigma: f64) -> Result<f64, SignOptError> {
    if sigma <= 0.0 {
        return Err(SignOptError::InvalidParameter { detail: format!("sigma {sigma} ≤ 0") });
    }
    let span = p.grid_min.abs().max(p.grid_max.abs()).max(sigma);
    let mean = p.mean();
    if mean.abs() > 1e-9 * span {
        return Err(SignOptError::MeanNotZero { mean });
    }
    // Mass of |k| beyond the integration margin, relative to the total.
    let tail_fraction = (-0.5 * TAIL_SIGMAS * TAIL_SIGMAS).exp();
    if tail_fraction > 1e-10 {
        return Err(SignOptError::TruncationLoss { fraction: tail_fraction });
    }
    Ok(0.5 * l1_of_transformed(p, sigma))
}

fn l1_of_transformed(p: &DiscretizedDistribution, sigma: f64) -> f64 {
    let margin = TAIL_SIGMAS * sigma;
    let lo = p.grid_min - margin;
    let hi = p.grid_max + margin;
    let n_z = (((hi - lo) / (MARGIN_SPACING_SIGMAS * sigma)).ceil() as usize).max(2) + 1;
    let h_z = (hi - lo) / (n_z - 1) as f64;
    let h_p = p.spacing();
    let mut g = vec![0.0; n_z];
    for (iz, gz) in g.iter_mut().enumerate() {
        let z = lo + h_z * iz as f64;
        let (j0, j1) = if p.n_points == 1 {
            (0usize, 0usize)
        } else {
            let j_lo = ((z - margin - p.grid_min) / h_p).ceil().max(0.0) as usize;
            let j_hi = (((z + margin - p.grid_min) / h_p).floor() as usize).min(p.n_points - 1);
            if j_lo > j_hi {
                continue;
            }
            (j_lo, j_hi)
        };
        let mut acc = 0.0;
        for j in j0..=j1 {
            acc += p.weights[j] * kernel(p.point(j) - z, sigma);
        }
        *gz = acc;
    }
    // Trapezoid with exact handling of piecewise-linear sign changes.
    let mut total = 0.0;
    for i in 0..n_z - 1 {
        let (a, b) = (g[i], g[i + 1]);
        total += if a * b >= 0.0 {
            0.5 * h_z * (a.abs() + b.abs())
        } else {
            0.5 * h_z * (a * a + b * b) / (a.abs() + b.abs())
        };
    }
    total
}

/// Margin of the Bayes classifier against centered Gaussian noise `N(0, w²)`:
/// `√(2/π)·σ²/√(σ²+w²)`. For symmetric unimodal noise the classifier is
/// `sign(A)` and `E[X sign(X+Z)] = 2σ²·E[φ_σ(Z)]`.
pub fn margin_gaussian_closed(sigma: f64, w: f64) -> f64 {
    (2.0 / std::f64::consts::PI).sqrt() * sigma * sigma / (sigma * sigma + w * w).sqrt()
}

/// Margin of the Bayes classifier against `U([-√3w, √3w])`:
/// `σ²(2Φ(√3w/σ) - 1)/(√3w)`, continuously extended to `σ√(2/π)` at w = 0.
pub fn margin_uniform_closed(sigma: f64, w: f64) -> f64 {
    if w <= 1e-12 * sigma {
        return sigma * (2.0 / std::f64::consts::PI).sqrt();
    }
    let half = 3.0_f64.sqrt() * w;
    sigma * sigma * (2.0 * normal_cdf(half / sigma) - 1.0) / half
}

/// Signed gap `(w/σ²)·margin_uniform - 1/√3`, evaluated through the upper
/// tail so the exponentially small deviation keeps relative accuracy.
pub fn uniform_margin_asymptotic_gap(sigma: f64, w: f64) -> f64 {
    let half = 3.0_f64.sqrt() * w;
    -2.0 * crate::mathx::normal_upper_tail(half / sigma) / 3.0_f64.sqrt()
}

/// Piecewise lower bound on the optimal margin:
/// `σ²/(√3w) - σ⁴/(2√3w³)` for w² ≥ σ², and `σ/(2√3)` below (both branches
/// meet at w = σ).
pub fn margin_lower_bound(sigma: f64, w: f64) -> f64 {
    let s3 = 3.0_f64.sqrt();
    if w * w >= sigma * sigma {
        sigma * sigma / (s3 * w) - sigma.powi(4) / (2.0 * s3 * w * w * w)
    } else {
        sigma / (2.0 * s3)
    }
}

// ── Dual certificate ────────────────────────────────────────────────────

/// Feasible dual variables of the variational problem, certifying
/// `‖Ap‖₁ ≥ objective_bound` for every admissible `p`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DualCertificate {
    pub u1: f64,
    pub v1: f64,
    pub v2: f64,
    pub objective_bound: f64,
}

/// Closed-form certificate for the `w ≥ σ` branch:
/// `u₁ = σ²/(√3w³), v₂ = 0, v₁ = √3σ²/w - σ⁴/(√3w³)`, giving
/// `objective_bound = -u₁w² + v₁ = 2σ²/(√3w) - σ⁴/(√3w³)`.
pub fn dual_certificate(sigma: f64, w: f64) -> Result<DualCertificate, SignOptError> {
    if w < sigma {
        return Err(SignOptError::BranchRequiresLargeNoise { sigma, w });
    }
    let s3 = 3.0_f64.sqrt();
    let u1 = sigma * sigma / (s3 * w * w * w);
    let v1 = s3 * sigma * sigma / w - sigma.powi(4) / (s3 * w * w * w);
    let v2 = 0.0;
    let objective_bound = -u1 * w * w + v1;
    Ok(DualCertificate { u1, v1, v2, objective_bound })
}

// ── The discretized variational LP ──────────────────────────────────────

/// Grid resolution for [`solve_optimal_noise`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridConfig {
    /// Decision atoms (odd, ≥ 5).
    pub n_points: usize,
    /// Half-width of the symmetric grid; default `max(8σ, 2√3w)`.
    pub half_width: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_points: 2001, half_width: None }
    }
}

struct Discretization {
    xs: Vec<f64>,
    rows: Vec<lp::KernelRow>,
    cost_out: Vec<f64>,
    moments: [Vec<f64>; 3],
    rhs: [f64; 3],
}

fn build_discretization(sigma: f64, w: f64, n: usize, half_width: f64) -> Discretization {
    let h = 2.0 * half_width / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|j| -half_width + h * j as f64).collect();
    let margin = TAIL_SIGMAS * sigma;
    let out_lo = -half_width - margin;
    let out_hi = half_width + margin;
    let h_out_target = (h / 2.0).max(LP_OUT_SPACING_SIGMAS * sigma);
    let m = (((out_hi - out_lo) / h_out_target).ceil() as usize).max(8) + 1;
    let h_out = (out_hi - out_lo) / (m - 1) as f64;

    let mut rows = Vec::with_capacity(m);
    let mut cost_out = vec![h_out; m];
    cost_out[0] = 0.5 * h_out;
    cost_out[m - 1] = 0.5 * h_out;
    for i in 0..m {
        let y = out_lo + h_out * i as f64;
        let j_lo = (((y - margin) + half_width) / h).ceil().max(0.0) as usize;
        let j_hi = ((((y + margin) + half_width) / h).floor() as usize).min(n - 1);
        let (start, vals) = if j_lo > j_hi {
            (0, Vec::new())
        } else {
            (j_lo, (j_lo..=j_hi).map(|j| kernel(xs[j] - y, sigma)).collect())
        };
        rows.push(lp::KernelRow { start, vals });
    }

    // Moment rows scaled by the grid half-width for conditioning.
    let scale = half_width.max(sigma);
    let ones = vec![1.0; n];
    let lin: Vec<f64> = xs.iter().map(|x| x / scale).collect();
    let quad: Vec<f64> = xs.iter().map(|x| (x / scale) * (x / scale)).collect();
    let rhs = [1.0, 0.0, (w / scale) * (w / scale)];
    Discretization { xs, rows, cost_out, moments: [ones, lin, quad], rhs }
}

fn objective_of(d: &Discretization, weights: &[f64]) -> f64 {
    let mut total = 0.0;
    for (row, q) in d.rows.iter().zip(&d.cost_out) {
        let mut acc = 0.0;
        for (off, &v) in row.vals.iter().enumerate() {
            acc += v * weights[row.start + off];
        }
        total += q * acc.abs();
    }
    total
}

/// Solves the discretized variational problem
///
/// `min ‖Ap‖₁  s.t.  p ≥ 0, Σp = 1, ⟨x, p⟩ = 0, ⟨x², p⟩ ≤ w²`
///
/// as a linear program (L1 split into positive/negative parts, variance as a
/// slack row) and returns the optimal distribution with the primal objective
/// `‖Ap‖₁`; the margin of the optimum is half the objective.
pub fn solve_optimal_noise(
    sigma: f64,
    w: f64,
    grid: &GridConfig,
) -> Result<(DiscretizedDistribution, f64), SignOptError> {
    if sigma <= 0.0 || !sigma.is_finite() || w < 0.0 || !w.is_finite() {
        return Err(SignOptError::InvalidParameter {
            detail: format!("need σ > 0 and w ≥ 0 (σ = {sigma}, w = {w})"),
        });
    }
    let n = grid.n_points;
    if n < 5 || n % 2 == 0 {
        return Err(SignOptError::InvalidGrid {
            detail: format!("n_points = {n} must be odd and ≥ 5"),
        });
    }
    let required = (6.0 * sigma).max(2.0 * 3.0_f64.sqrt() * w);
    let half_width = grid.half_width.unwrap_or_else(|| (8.0 * sigma).max(2.0 * 3.0_f64.sqrt() * w));
    if half_width < required * (1.0 - 1e-12) {
        return Err(SignOptError::GridTooSmall { required, got: half_width });
    }
    if !(half_width > 0.0) {
        return Err(SignOptError::Infeasible { detail: "grid does not straddle 0".into() });
    }

    let disc = build_discretization(sigma, w, n, half_width);

    if w == 0.0 {
        // Variance constraint forces all mass onto the origin.
        let mut weights = vec![0.0; n];
        weights[n / 2] = 1.0;
        let objective = objective_of(&disc, &weights);
        let dist = DiscretizedDistribution::new(-half_width, half_width, weights)?;
        return Ok((dist, objective));
    }

    let problem = lp::LpStructure {
        n,
        m: disc.rows.len(),
        rows: disc.rows.clone(),
        moments: disc.moments.clone(),
        cost_out: disc.cost_out.clone(),
        rhs: disc.rhs,
    };
    // 1e-7 on feasibility and gap leaves the objective accurate to ~1e-7
    // relative; the mean residual is repaired below.
    let sol = lp::solve(&problem, 1e-7, 200)?;
    let weights = recenter(&disc.xs, sol.x[..n].to_vec());
    let dist = DiscretizedDistribution::new(-half_width, half_width, weights)?;
    let objective = objective_of(&disc, &dist.weights);
    Ok((dist, objective))
}

// Clips stray negatives and tilts the weights by (1 + a·x) so the mean is
// zero to machine precision; the tilt is O(solver feasibility) relative.
fn recenter(xs: &[f64], mut w: Vec<f64>) -> Vec<f64> {
    for v in w.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    for _ in 0..3 {
        let mass: f64 = w.iter().sum();
        let mean: f64 = xs.iter().zip(&w).map(|(x, v)| x * v).sum::<f64>() / mass;
        let second: f64 = xs.iter().zip(&w).map(|(x, v)| x * x * v).sum::<f64>() / mass;
        if second <= 0.0 || mean == 0.0 {
            break;
        }
        let a = -mean / second;
        for (x, v) in xs.iter().zip(w.iter_mut()) {
            *v *= (1.0 + a * x).max(0.0);
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathx::SQRT_2PI;

    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

    #[test]
    fn gl_rule_integrates_high_degree_polynomials() {
        // ∫_{-1}^{1} x^k dx for even k up to 22
        for k in [0usize, 2, 8, 16, 22] {
            let mut got = 0.0;
            for i in 0..6 {
                got += GL_WEIGHTS[i]
                    * (GL_NODES[i].powi(k as i32) + (-GL_NODES[i]).powi(k as i32));
            }
            let want = 2.0 / (k as f64 + 1.0);
            assert!((got - want).abs() < 1e-13, "k={k}: {got} vs {want}");
        }
    }

    fn apply_poly(sigma: f64, f: impl Fn(f64) -> f64) -> (UniformGrid, Vec<f64>, Vec<f64>) {
        let grid = UniformGrid::new(-12.0 * sigma, 12.0 * sigma, 481);
        let fx: Vec<f64> = (0..grid.n).map(|i| f(grid.point(i))).collect();
        let out = operator_a_apply(&fx, &grid, sigma).unwrap();
        (grid, fx, out)
    }

    #[test]
    fn operator_identity_constant() {
        let (grid, _, out) = apply_poly(1.0, |_| 1.0);
        for i in grid.interior(8.0) {
            assert!(out[i].abs() < 1e-10, "A1 at {} = {}", grid.point(i), out[i]);
        }
    }

    #[test]
    fn operator_identity_linear() {
        let sigma = 1.3;
        let (grid, _, out) = apply_poly(sigma, |x| x);
        for i in grid.interior(8.0 * sigma) {
            let want = 2.0 * sigma * sigma;
            assert!((out[i] - want).abs() < 1e-6 * want, "Ax at {} = {}", grid.point(i), out[i]);
        }
    }

    #[test]
    fn operator_identity_quadratic() {
        let sigma = 0.9;
        let (grid, _, out) = apply_poly(sigma, |x| x * x);
        for i in grid.interior(8.0 * sigma) {
            let want = 4.0 * sigma * sigma * grid.point(i);
            assert!((out[i] - want).abs() < 1e-5 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn operator_identity_cubic() {
        // Ax³ = 6σ²x² + 6σ⁴ (the fourth half-normal moment is 3σ⁴)
        let sigma = 1.0;
        let (grid, _, out) = apply_poly(sigma, |x| x * x * x);
        for i in grid.interior(8.0 * sigma) {
            let x = grid.point(i);
            let want = 6.0 * sigma * sigma * x * x + 6.0 * sigma.powi(4);
            assert!(
                (out[i] - want).abs() < 1e-5 * (1.0 + want.abs()),
                "Ax³ at {x} = {} want {want}",
                out[i]
            );
        }
    }

    #[test]
    fn operator_rejects_coarse_grid() {
        let grid = UniformGrid::new(-8.0, 8.0, 33); // spacing 0.5 > 1/4
        let f = vec![1.0; 33];
        let err = operator_a_apply(&f, &grid, 1.0).unwrap_err();
        assert!(matches!(err, SignOptError::ResolutionTooCoarse { .. }));
    }

    #[test]
    fn margin_point_mass_equals_expected_absolute_value() {
        // E|X| for X ~ N(0,1), via quadrature oracle and closed form σ√(2/π).
        let n = 200_000;
        let hi = 10.0;
        let dx = hi / n as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let x: f64 = (i as f64 + 0.5) * dx;
            oracle += 2.0 * x * (-0.5 * x * x).exp() / SQRT_2PI * dx;
        }
        assert!((oracle - SQRT_2_OVER_PI).abs() < 1e-6);

        let p = DiscretizedDistribution::point_mass_at_zero();
        let got = margin_risk(&p, 1.0).unwrap();
        assert!((got - oracle).abs() < 2e-4 * oracle, "margin {got} vs {oracle}");
    }

    #[test]
    fn margin_gaussian_table_matches_closed_form() {
        // N(0,1) noise discretized on a fine grid.
        let n = 1601;
        let lo = -10.0;
        let hi = 10.0;
        let h = (hi - lo) / (n - 1) as f64;
        let weights: Vec<f64> = (0..n)
            .map(|j| {
                let x = lo + h * j as f64;
                let edge = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                edge * (-0.5 * x * x).exp()
            })
            .collect();
        let p = DiscretizedDistribution::new(lo, hi, weights).unwrap();
        let got = margin_risk(&p, 1.0).unwrap();
        let want = margin_gaussian_closed(1.0, 1.0);
        assert!((want - 0.5641895835477563).abs() < 1e-12);
        assert!((got - want).abs() < 1e-3 * want, "margin {got} vs {want}");
    }

    #[test]
    fn margin_uniform_large_w_approaches_inverse_sqrt3() {
        let w = 100.0;
        let p = DiscretizedDistribution::uniform(w, 4001).unwrap();
        let got = margin_risk(&p, 1.0).unwrap();
        let scaled = w * got;
        let want = 1.0 / 3.0_f64.sqrt();
        assert!((scaled - want).abs() < 0.01 * want, "scaled margin {scaled} vs {want}");
    }

    #[test]
    fn margin_uniform_closed_form_tracks_quadrature() {
        for &w in &[0.5, 1.0, 3.0, 10.0] {
            let p = DiscretizedDistribution::uniform(w, 2001).unwrap();
            let got = margin_risk(&p, 1.0).unwrap();
            let want = margin_uniform_closed(1.0, w);
            assert!((got - want).abs() < 2e-3 * want, "w={w}: {got} vs {want}");
        }
    }

    #[test]
    fn margin_rejects_shifted_distribution() {
        let p = DiscretizedDistribution::new(0.5, 1.5, vec![1.0, 1.0, 1.0]).unwrap();
        let err = margin_risk(&p, 1.0).unwrap_err();
        assert!(matches!(err, SignOptError::MeanNotZero { .. }));
    }

    #[test]
    fn lower_bound_branches_meet_at_sigma() {
        let s3 = 3.0_f64.sqrt();
        assert!((margin_lower_bound(1.0, 1.0) - 1.0 / (2.0 * s3)).abs() < 1e-15);
        assert!((margin_lower_bound(1.0, 0.5) - 1.0 / (2.0 * s3)).abs() < 1e-15);
        // w = 2: 1/(2√3) - 1/(16√3)... = σ²/(√3·2) - σ⁴/(2√3·8)
        let want = 1.0 / (s3 * 2.0) - 1.0 / (2.0 * s3 * 8.0);
        assert!((margin_lower_bound(1.0, 2.0) - want).abs() < 1e-15);
        assert!((want - 0.2526).abs() < 1e-4);
        // continuity across the boundary
        let eps = 1e-9;
        let below = margin_lower_bound(1.0, 1.0 - eps);
        let above = margin_lower_bound(1.0, 1.0 + eps);
        assert!((below - above).abs() < 1e-7);
    }

    #[test]
    fn certificate_values_and_branch_guard() {
        let s3 = 3.0_f64.sqrt();
        let cert = dual_certificate(1.0, 1.0).unwrap();
        assert!((cert.objective_bound - 1.0 / s3).abs() < 1e-15);
        assert_eq!(cert.v2, 0.0);
        assert!((cert.objective_bound - (-cert.u1 + cert.v1)).abs() < 1e-15);

        let cert2 = dual_certificate(1.0, 2.0).unwrap();
        let want = 2.0 / (s3 * 2.0) - 1.0 / (s3 * 8.0);
        assert!((cert2.objective_bound - want).abs() < 1e-15);
        assert!((want - 0.5052).abs() < 1e-4);

        assert!(matches!(
            dual_certificate(1.0, 0.9),
            Err(SignOptError::BranchRequiresLargeNoise { .. })
        ));
    }

    #[test]
    fn asymptotic_gap_is_monotone_to_zero() {
        let gaps: Vec<f64> =
            [10.0, 30.0, 100.0, 300.0].iter().map(|&w| uniform_margin_asymptotic_gap(1.0, w)).collect();
        for g in &gaps {
            assert!(*g <= 0.0);
        }
        for i in 1..gaps.len() {
            assert!(gaps[i].abs() <= gaps[i - 1].abs());
        }
        assert!(gaps[0].abs() < 1e-3);
    }

    #[test]
    fn solve_rejects_bad_grids() {
        assert!(matches!(
            solve_optimal_noise(1.0, 1.0, &GridConfig { n_points: 200, half_width: None }),
            Err(SignOptError::InvalidGrid { .. })
        ));
        assert!(matches!(
            solve_optimal_noise(1.0, 10.0, &GridConfig { n_points: 201, half_width: Some(5.0) }),
            Err(SignOptError::GridTooSmall { .. })
        ));
    }

    #[test]
    fn solve_w_zero_returns_point_mass() {
        let (p, obj) = solve_optimal_noise(1.0, 0.0, &GridConfig { n_points: 201, half_width: None })
            .unwrap();
        assert_eq!(p.weights.iter().filter(|&&w| w > 0.0).count(), 1);
        assert!((p.variance()).abs() < 1e-12);
        // the LP objective carries the coarser σ/16 output quadrature
        let want = 2.0 * SQRT_2_OVER_PI;
        assert!((obj - want).abs() < 1.5e-3 * want, "objective {obj} vs {want}");
    }
}
