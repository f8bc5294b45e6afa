//! Solves the discretized optimal-obfuscation problem for several noise
//! budgets and compares the LP optimum against the closed-form lower bound,
//! the uniform candidate, and the dual certificate.
//!
//!     cargo run --release --example optimal_noise

use std::time::Instant;

use ada_lab::signopt::{
    dual_certificate, margin_lower_bound, margin_risk, solve_optimal_noise,
    DiscretizedDistribution, GridConfig,
};

fn main() {
    let sigma = 1.0;
    let grid = GridConfig::default();
    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8} {:>7}",
        "w", "lp_margin", "lower_bound", "uniform", "dual_bound", "gap_rel", "tv_unif", "secs"
    );
    for w in [1.0, 2.0, 5.0, 10.0, 50.0, 100.0] {
        let t0 = Instant::now();
        let (p, objective) = solve_optimal_noise(sigma, w, &grid).expect("LP solves");
        let secs = t0.elapsed().as_secs_f64();
        let lp_margin = margin_risk(&p, sigma).expect("margin of LP solution");
        let lower = margin_lower_bound(sigma, w);
        let uniform = DiscretizedDistribution::uniform(w, grid.n_points)
            .and_then(|u| margin_risk(&u, sigma))
            .expect("margin of uniform");
        let (dual, gap) = match dual_certificate(sigma, w) {
            Ok(cert) => {
                (cert.objective_bound, (objective - cert.objective_bound) / objective)
            }
            Err(_) => (f64::NAN, f64::NAN),
        };
        println!(
            "{:>6} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.6e} {:>12.3e} {:>8.4} {:>7.2}",
            w,
            lp_margin,
            lower,
            uniform,
            0.5 * dual,
            gap,
            p.tv_distance_to_uniform(w),
            secs
        );
        assert!(
            lp_margin >= lower - 1e-4,
            "w={w}: LP margin {lp_margin} under the certificate bound {lower}"
        );
    }
}
