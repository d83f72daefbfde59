//! Periodic orbits of the basilica map z^2 - 1 up to period 4, with their
//! multipliers and classification.

use coding_trees::census::find_periodic_orbits;
use coding_trees::RationalMap;
use num_complex::Complex64;

fn main() -> coding_trees::Result<()> {
    let map = RationalMap::quadratic(Complex64::new(-1.0, 0.0));
    for n in 1..=4 {
        for orbit in find_periodic_orbits(&map, n)? {
            let pts: Vec<String> = orbit.points.iter().map(|p| format!("{p:.6}")).collect();
            println!(
                "period {n}  {:<11} |lambda| = {:>10.4}  [{}]",
                orbit.kind.as_str(),
                orbit.multiplier.norm(),
                pts.join(", ")
            );
        }
    }
    Ok(())
}
