//! A simulation and verification laboratory for adaptive data analysis,
//! played as a sequential game between a data curator (the *player*) and a
//! query-selection mechanism (the *adversary*).
//!
//! Each round the player declares a noise distribution `Z_i`, the adversary
//! then selects a statistic `φ_{T_i}` from a Gaussian query world with
//! per-query variance at most `σ²`, and the player releases
//! `A_i = φ_{T_i} + Z_i`. The adversary tries to drive up the generalization
//! error `E(A_i − μ_{T_i})²`; the player tries to keep it small for every
//! round simultaneously.
//!
//! The crate provides:
//!
//! - [`world`] — the Gaussian query world: incremental conditional sampling of
//!   statistic values as queries accumulate, plus a finite-dimensional linear
//!   query world over concrete data.
//! - [`mechanisms`] — player release protocols (Gaussian / uniform / zero /
//!   custom noise schedules, and an adaptive callback contract).
//! - [`adversaries`] — query selection protocols: the non-adaptive orthogonal
//!   baseline, the one-step least-favorable construction, the per-round greedy
//!   variant, and the Bayes sign-classifier adversary that witnesses the
//!   minimax lower bound.
//! - [`bounds`] — exact closed-form evaluators for every risk bound and the
//!   conditional-expectation recursion, used as reference lines and as test
//!   oracles.
//! - [`signopt`] — the sign-obfuscation subproblem: the smoothing operator `A`,
//!   the margin-risk functional, a discretized linear program for the optimal
//!   obfuscating noise distribution, and its dual certificate.
//! - [`harness`] — Monte Carlo estimation of per-round bias and MSE over many
//!   replications, with deterministic parallelism.
//! - [`cli`] — config parsing, CSV emission, and the self-test suite behind
//!   the `ada-lab` binary.
//!
//! Determinism is load-bearing throughout: every random draw is keyed by
//! `(seed, replication, round, purpose)` through a counter-based scheme, so
//! results are bit-identical across runs and across worker counts.

pub mod adversaries;
pub mod bounds;
pub mod cli;
pub mod harness;
pub mod linalg;
pub mod mathx;
pub mod mechanisms;
pub mod rngs;
pub mod signopt;
pub mod world;

pub use harness::{estimate_risk, run_game, sweep, ExperimentConfig, RiskReport};
pub use world::{GameHistory, GaussianWorldState, LinearQueryWorld, QuerySpec};
