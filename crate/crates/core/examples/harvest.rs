//! Harvests repelling periodic points on the boundary of the basilica's
//! immediate basin, each with a certified inverse branch and an access
//! curve from the tree root.

use coding_trees::config::RunConfig;
use coding_trees::periodics::harvest;
use coding_trees::BuildMode;

fn main() -> coding_trees::Result<()> {
    let mut cfg = RunConfig::bundled("basilica")?;
    cfg.harvest.trials = 150;
    let tree = cfg.build_tree(&BuildMode::Full)?;
    let report = harvest(&tree, &cfg.sampler(cfg.seed)?, &cfg.harvest, None)?;
    println!(
        "{} points, {} duplicates, {} failed attempts",
        report.records.len(),
        report.duplicates,
        report.failures.len()
    );
    for r in report.records.iter().take(15) {
        println!(
            "period {:>2}  {:<24} multiplier {:.6}  word {}  access length {:.3}",
            r.primitive_period,
            format!("{:.8}", r.point),
            r.multiplier,
            r.word,
            r.gamma_length
        );
    }
    Ok(())
}
