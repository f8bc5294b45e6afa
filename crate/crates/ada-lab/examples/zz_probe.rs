use ada_lab::adversaries::{select_one_step, SharedTracker};
use ada_lab::harness::{run_game, Conjunction, ExperimentConfig};
use ada_lab::adversaries::{AdversaryConfig, AdversaryKind};
use ada_lab::mechanisms::default_schedule;
use ada_lab::world::{GaussianWorldState, SharedTranscript};

fn main() {
    let sigma = 1.0;
    let k = 10;
    let config = ExperimentConfig {
        k,
        sigma,
        mechanism: default_schedule(k, sigma).unwrap(),
        adversary: AdversaryConfig { kind: AdversaryKind::KStepGreedy, sigma },
        replications: 1,
        seed: 11,
        conjunction: Conjunction::Max,
    };
    // replay rep 50 manually to see which round fails and why
    let rep = 50u64;
    let mechanism = config.mechanism.build();
    let mut adversary = config.adversary.build(k);
    let mut world = GaussianWorldState::new(sigma, ada_lab::rngs::world_seed(config.seed, rep));
    let mut history = ada_lab::world::GameHistory::default();
    let mut tracker = SharedTracker::new(sigma);
    for round in 0..k {
        let declared = mechanism.declare(round, &history.shared, &history.player_private);
        let query = adversary.select(&history.shared, &declared).unwrap();
        tracker.sync(&history.shared);
        // recompute the one-shot construction for comparison
        let one_shot = select_one_step(&history.shared, sigma);
        let diff: f64 = query
            .cov_with_history
            .iter()
            .zip(&one_shot.cov_with_history)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        match world.validate_query(&query) {
            Ok(()) => println!("round {round}: ok (stateful vs one-shot max diff {diff:.3e})"),
            Err(e) => {
                println!("round {round}: REJECTED {e}; stateful vs one-shot diff {diff:.3e}");
                // check the one-shot version
                match world.validate_query(&one_shot) {
                    Ok(()) => println!("   one-shot variant passes"),
                    Err(e2) => println!("   one-shot variant also fails: {e2}"),
                }
                return;
            }
        }
        world = world.extend(query.clone()).unwrap();
        let phi = *world.realized.last().unwrap();
        let mut rng = ada_lab::rngs::stream(config.seed, rep, round as u64, ada_lab::rngs::Purpose::Noise);
        let (_a, z) = ada_lab::mechanisms::release(phi, &declared, &mut rng);
        history.push_round(query, declared, phi, z);
    }
    let _ = run_game(&config, rep);
}
