//! Sweeps the round count k, fits the growth exponent of the worst-round MSE
//! (the √k law shows up as slope ≈ 0.5 on log-log axes), and writes the
//! plot-ready CSV.
//!
//!     cargo run --release --example rate_sweep

use std::time::Instant;

use ada_lab::adversaries::{AdversaryConfig, AdversaryKind};
use ada_lab::cli::plotdata_csv;
use ada_lab::harness::{estimate_risk, Conjunction, ExperimentConfig};
use ada_lab::mechanisms::default_schedule;

fn main() {
    let sigma = 1.0;
    let mut entries = Vec::new();
    for (k, reps) in [(4usize, 40_000u64), (16, 40_000), (64, 20_000), (256, 4_000)] {
        let config = ExperimentConfig {
            k,
            sigma,
            mechanism: default_schedule(k, sigma).expect("k ≥ 1"),
            adversary: AdversaryConfig { kind: AdversaryKind::KStepGreedy, sigma },
            replications: reps,
            seed: 310,
            conjunction: Conjunction::Max,
        };
        let t0 = Instant::now();
        let report = estimate_risk(&config).expect("estimation runs");
        println!(
            "k = {k:>4}: max-round MSE = {:>8.4} (bound {:>8.4})  [{:.1}s, {} reps]",
            report.max_round_mse(),
            report.bound_report.k_step_mse,
            t0.elapsed().as_secs_f64(),
            reps,
        );
        entries.push((config, report));
    }

    // least-squares slope of log(max MSE) against log k
    let pts: Vec<(f64, f64)> = entries
        .iter()
        .map(|(c, r)| ((c.k as f64).ln(), r.max_round_mse().ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    println!("fitted exponent of max-round MSE in k: {slope:.3}");

    print!("{}", plotdata_csv(&entries));
}
