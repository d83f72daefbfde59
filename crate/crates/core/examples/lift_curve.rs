//! Pulls a segment back through z^2 - 1 along both inverse branches and
//! checks that the lifts map back onto the segment.

use coding_trees::lifting::{commutation_residual, lift_curve, preimages, LiftOptions, Polyline};
use coding_trees::{RationalMap, SpherePoint};
use num_complex::Complex64;

fn main() -> coding_trees::Result<()> {
    let map = RationalMap::quadratic(Complex64::new(-1.0, 0.0));
    let segment = Polyline::resampled(
        &[SpherePoint::from_re_im(0.5, 0.0), SpherePoint::from_re_im(0.5, 1.0)],
        1e-2,
    )?;
    let opts = LiftOptions::default();
    for start in preimages(&map, segment.first())?.simple()? {
        let lift = lift_curve(&map, &segment, start, &opts)?;
        println!(
            "start {start:.6} -> end {:.6}: {} points, length {:.4}, residual {:.2e}",
            lift.last(),
            lift.len(),
            lift.length(),
            commutation_residual(&map, &lift, &segment)
        );
    }
    Ok(())
}
