use coding_trees::census::{boundary_point_set, rasterize_basin, BasinTarget, Bounds, PeriodicOrbitRecord};
use coding_trees::config::RunConfig;
use coding_trees::diagnostics::{claim_check, support_density_check, BernoulliSampler};
use coding_trees::error::Error;
use coding_trees::lifting::CertifyOptions;
use coding_trees::periodics::{
    candidate_branch, certify_candidate, extract_periodic_point, find_recurrence, sample_anchor, Anchor, HarvestParams,
};
use coding_trees::sphere::chordal_distance;
use coding_trees::{BuildMode, CodingTree, RationalMap, SpherePoint, SymbolWord};
use num_complex::Complex64;

fn bundled_tree(name: &str) -> (RunConfig, CodingTree) {
    let cfg = RunConfig::bundled(name).unwrap();
    let tree = cfg.build_tree(&BuildMode::Full).unwrap();
    (cfg, tree)
}

fn anchor_for(tree: &CodingTree, prefix: Vec<u8>) -> Anchor {
    Anchor {
        point: tree.vertex(&prefix).unwrap(),
        m: prefix.len() - 1,
        prefix,
        retries: 0,
    }
}

#[test]
fn parabolic_branch_reports_slow_convergence() {
    let (_, tree) = bundled_tree("cauliflower");
    let word = SymbolWord::periodic(&[1]).unwrap();
    let v = tree.branch_vertices(&word, 12).unwrap();
    // The branch creeps toward the parabolic point 1/2.
    let d: Vec<f64> = v.iter().map(|p| chordal_distance(*p, SpherePoint::from_re_im(0.5, 0.0))).collect();
    assert!(d[11] < d[6] && d[6] < d[2]);
    assert!(matches!(tree.coding_point(&word, 1e-8, 300), Err(Error::SlowConvergence { .. })));
}

#[test]
fn parabolic_anchor_retries_or_reports_slow_convergence() {
    let (cfg, tree) = bundled_tree("cauliflower");
    let sampler = BernoulliSampler::new(vec![0.999, 0.001], 5).unwrap();
    let params = HarvestParams {
        m_min: 2,
        ..cfg.harvest.clone()
    };
    let mut slow = 0;
    for trial in 0..4 {
        match sample_anchor(&tree, &sampler, trial, 0.01, &params) {
            Ok(a) => slow += a.retries,
            Err(Error::SlowConvergence { .. }) => slow += 1,
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert!(slow > 0);
}

#[test]
fn period_two_word_gives_a_cube_root_of_unity_with_multiplier_four() {
    let (_, tree) = bundled_tree("z2");
    let anchor = anchor_for(&tree, vec![1, 2, 1, 2, 1, 2]);
    let cand = find_recurrence(&tree, &anchor, 0.3, 12, 6).unwrap();
    let branch = candidate_branch(&tree, &cand).unwrap();
    let pp = extract_periodic_point(tree.map(), &branch, &cand).unwrap();
    assert_eq!(pp.primitive_period, 2);
    let z = pp.point.finite().unwrap();
    assert!((z.powu(3) - 1.0).norm() < 1e-10 && (z - 1.0).norm() > 0.5);
    assert!((pp.multiplier - 4.0).norm() < 1e-9);
}

#[test]
fn basilica_alpha_is_extracted_with_its_multiplier() {
    let (_, tree) = bundled_tree("basilica");
    let anchor = anchor_for(&tree, vec![2; 9]);
    let cand = find_recurrence(&tree, &anchor, 0.3, 12, 6).unwrap();
    let branch = candidate_branch(&tree, &cand).unwrap();
    let crit = tree.map().critical_points(16).unwrap();
    let cert = certify_candidate(&branch, &cand, &crit, &CertifyOptions::default()).unwrap();
    assert!(cert.lambda_est * 1.5 < 1.0);
    let pp = extract_periodic_point(tree.map(), &branch, &cand).unwrap();
    let alpha = (1.0 - 5f64.sqrt()) / 2.0;
    assert!(chordal_distance(pp.point, SpherePoint::from_re_im(alpha, 0.0)) < 1e-8);
    assert!((pp.multiplier.norm() - (5f64.sqrt() - 1.0)).abs() < 1e-8);
}

#[test]
fn basilica_recurrence_within_twenty_steps() {
    let (cfg, tree) = bundled_tree("basilica");
    let sampler = cfg.sampler(2024).unwrap();
    let params = cfg.harvest.clone();
    let found = (0..100)
        .filter(|&t| {
            sample_anchor(&tree, &sampler, t, 0.2, &params)
                .and_then(|a| find_recurrence(&tree, &a, 0.2, 20, params.look_ahead))
                .is_ok_and(|c| c.n <= 20)
        })
        .count();
    assert!(found >= 90, "{found} of 100");
}

#[test]
fn claim_is_vacuous_for_huge_radius() {
    let (cfg, tree) = bundled_tree("z2");
    let sampler = cfg.sampler(1).unwrap();
    let depth = tree.depth() as f64;
    for c in claim_check(&tree, &sampler, &[2, 5], 2.0 * depth, 50) {
        assert_eq!(c.fraction, 1.0);
    }
}

fn unit_circle_boundary(resolution: usize) -> Vec<SpherePoint> {
    let map = RationalMap::quadratic(Complex64::new(0.0, 0.0));
    let target = BasinTarget::Cycle(PeriodicOrbitRecord::from_point(&map, SpherePoint::from_re_im(0.0, 0.0), 1));
    let raster = rasterize_basin(&map, &target, Bounds::square(1.5), (resolution, resolution), 200).unwrap();
    boundary_point_set(&raster).unwrap()
}

#[test]
fn coverage_of_the_unit_circle() {
    let (cfg, tree) = bundled_tree("z2");
    let boundary = unit_circle_boundary(256);
    let sampler = cfg.sampler(9).unwrap();
    let dense = support_density_check(&tree, &sampler, &boundary, 1000, 0.05);
    assert!(dense.covered_fraction >= 0.99, "{}", dense.covered_fraction);
    let all = support_density_check(&tree, &sampler, &boundary, 10, 2.0);
    assert_eq!(all.covered_fraction, 1.0);
    // One sample covers the arc within chordal eps: 2 asin(eps/2) / pi.
    let one = support_density_check(&tree, &sampler, &boundary, 1, 0.05);
    let share = 2.0 * (0.025f64).asin() / std::f64::consts::PI;
    assert!((one.covered_fraction - share).abs() < 0.3 * share, "{} vs {share}", one.covered_fraction);
}

#[test]
fn coarse_boundary_lies_near_the_fine_boundary() {
    let fine = unit_circle_boundary(512);
    let coarse = unit_circle_boundary(128);
    let h = 3.0 / 128.0;
    for p in &coarse {
        let d = fine.iter().map(|q| chordal_distance(*p, *q)).fold(f64::INFINITY, f64::min);
        // Chordal distances near the unit circle are planar distances.
        assert!(d <= 3.0 * h, "{p} is {d} away");
    }
}
