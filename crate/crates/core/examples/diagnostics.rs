//! Hypothesis checks for the bundled basilica tree: critical orbits stay
//! away from the base curves, preimage volumes of a basin disc shrink, and
//! tails of random branches get short.

use coding_trees::config::RunConfig;
use coding_trees::diagnostics::{check_condition_i, claim_check, volume_decay_series};
use coding_trees::BuildMode;

fn main() -> coding_trees::Result<()> {
    let cfg = RunConfig::bundled("basilica")?;
    let map = cfg.map()?;
    let tree = cfg.build_tree(&BuildMode::Full)?;
    let d = &cfg.diagnostics;

    let cond = check_condition_i(&map, tree.base_curves(), d.condition_depth, d.condition_margin)?;
    println!(
        "condition (i): {} (closest approach {:.4} to curve {})",
        if cond.pass { "pass" } else { "fail" },
        cond.min_distance,
        cond.closest_curve + 1
    );

    for region in cfg.volume_regions(tree.base_curves()) {
        for e in volume_decay_series(&map, &region, 0, d.volume_n_max, d.volume_samples, cfg.seed) {
            println!("  vol n={:>2}  {:.5} +- {:.5}", e.n, e.epsilon_hat, e.stderr);
        }
    }

    let sampler = cfg.sampler(cfg.seed)?;
    for c in claim_check(&tree, &sampler, &d.claim_depths, d.claim_radius, d.claim_trials) {
        println!("claim n={:>2}: {:.3} of {} words have tail < {}", c.n, c.fraction, c.trials, c.r);
    }
    Ok(())
}
