//! Builds the bundled z^2 coding tree and follows a few symbol words to
//! their coding points. Eventually periodic words land on repelling
//! periodic points of the unit circle.

use coding_trees::config::RunConfig;
use coding_trees::{BuildMode, SymbolWord};

fn main() -> coding_trees::Result<()> {
    let cfg = RunConfig::bundled("z2")?;
    let tree = cfg.build_tree(&BuildMode::Full)?;
    println!("depth {} tree with {} edges", tree.depth(), tree.edge_count());
    println!("forward commutation residual {:.2e}", tree.commutation_residual(&tree.words())?);

    for cycle in [&[1u8][..], &[2], &[1, 2], &[1, 1, 2]] {
        let word = SymbolWord::periodic(cycle)?;
        let (point, tail) = tree.coding_point(&word, 1e-10, 200)?;
        println!("{word:<10} -> {point:.10}  |z| = {:.12}  tail {tail:.1e}", point.finite().map_or(f64::INFINITY, |z| z.norm()));
    }
    Ok(())
}
