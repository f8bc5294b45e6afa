//! Estimates per-round MSE of the greedy adversary against the tuned
//! Gaussian schedule and compares the worst round with the closed-form
//! risk bound 2(√(k-1)+1)σ².
//!
//!     cargo run --release --example greedy_vs_bounds

use std::time::Instant;

use ada_lab::adversaries::{AdversaryConfig, AdversaryKind};
use ada_lab::harness::{estimate_risk, Conjunction, ExperimentConfig};
use ada_lab::mechanisms::default_schedule;

fn main() {
    let sigma = 1.0;
    for k in [5usize, 10, 20, 50] {
        let config = ExperimentConfig {
            k,
            sigma,
            mechanism: default_schedule(k, sigma).expect("k ≥ 1"),
            adversary: AdversaryConfig { kind: AdversaryKind::KStepGreedy, sigma },
            replications: 20_000,
            seed: 11,
            conjunction: Conjunction::Max,
        };
        let t0 = Instant::now();
        let report = estimate_risk(&config).expect("estimation runs");
        let bound = report.bound_report.k_step_mse;
        println!(
            "k = {k:>3}: max-round MSE = {:.4} (combined {:.4}), bound = {:.4}, \
             headroom = {:.1}%  [{:.2}s]",
            report.max_round_mse(),
            report.combined_risk,
            bound,
            100.0 * (bound - report.max_round_mse()) / bound,
            t0.elapsed().as_secs_f64(),
        );
        for (i, r) in report.per_round.iter().enumerate() {
            if i == 0 || i == k - 2 || i == k - 1 {
                println!(
                    "    round {:>3}: mse = {:.4} ± {:.4}, cond bias² = {:.4}",
                    i + 1,
                    r.mse_hat,
                    r.mse_se,
                    r.cond_bias_sq_hat
                );
            }
        }
        assert!(report.max_round_mse() <= bound + 4.0 * report.per_round.iter().map(|r| r.mse_se).fold(0.0, f64::max));
    }
}
