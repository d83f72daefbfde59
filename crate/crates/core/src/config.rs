//! Run configuration, read from TOML.
//!
//! Complex numbers are `[re, im]` pairs. Every section except `map`, `tree`
//! and `raster` has defaults.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::census::{find_periodic_orbits, BasinTarget, Bounds, OrbitKind};
use crate::diagnostics::{BernoulliSampler, Region};
use crate::error::{Error, Result};
use crate::map::{MapCoefficients, RationalMap};
use crate::periodics::HarvestParams;
use crate::sphere::SpherePoint;
use crate::tree::{BuildMode, CodingTree, TreeOptions};

pub type Pair = [f64; 2];

fn point(p: Pair) -> SpherePoint {
    SpherePoint::from_re_im(p[0], p[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    /// Master seed; every randomized stage derives its own seed from it.
    pub seed: u64,
    /// Default output directory, relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub map: MapCoefficients,
    pub tree: TreeConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub census: CensusConfig,
    pub raster: RasterConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub harvest: HarvestParams,
    #[serde(default)]
    pub overlay: OverlayConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub root: Pair,
    /// Vertex lists of the base curves, one per symbol.
    pub base_curves: Vec<Vec<Pair>>,
    pub depth: usize,
    /// Resampling step of curves and lifts.
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_max_step() -> f64 {
    TreeOptions::default().lift.max_step
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    /// Bernoulli weights; empty means uniform.
    #[serde(default)]
    pub weights: Vec<f64>,
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusConfig {
    pub max_period: usize,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self { max_period: 8 }
    }
}

/// Which boundary the density report measures against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Frontier of the immediate basin.
    Immediate,
    /// Frontier of the whole basin.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterConfig {
    pub bounds: Bounds,
    pub resolution: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// A point near the attracting or parabolic cycle whose basin is drawn.
    pub cycle_point: Pair,
    pub cycle_period: usize,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryKind,
}

fn default_max_iters() -> usize {
    1000
}

fn default_boundary() -> BoundaryKind {
    BoundaryKind::Immediate
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscConfig {
    pub center: Pair,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Length of the critical orbits checked by condition (i).
    pub condition_depth: usize,
    pub condition_margin: f64,
    /// Regions for the preimage volume series; empty means tubes of radius
    /// `tube_radius` around the base curves.
    pub volume_regions: Vec<DiscConfig>,
    pub tube_radius: f64,
    pub volume_samples: usize,
    pub volume_n_max: usize,
    pub claim_depths: Vec<usize>,
    pub claim_radius: f64,
    pub claim_trials: usize,
    pub lyapunov_burn_in: usize,
    pub lyapunov_length: usize,
    pub coverage_trials: usize,
    pub coverage_eps: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            condition_depth: 32,
            condition_margin: 0.05,
            volume_regions: vec![],
            tube_radius: 0.05,
            volume_samples: 100_000,
            volume_n_max: 12,
            claim_depths: vec![5, 10, 20],
            claim_radius: 0.1,
            claim_trials: 1000,
            lyapunov_burn_in: 0,
            lyapunov_length: 30,
            coverage_trials: 1000,
            coverage_eps: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverlayConfig {
    /// Tree edges are drawn for this many sampled words.
    pub tree_words: usize,
    pub tree_depth: usize,
    pub marker_size: i64,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            tree_words: 64,
            tree_depth: 8,
            marker_size: 2,
        }
    }
}

const BUNDLED: [(&str, &str); 3] = [
    ("z2", include_str!("../configs/z2.toml")),
    ("basilica", include_str!("../configs/basilica.toml")),
    ("cauliflower", include_str!("../configs/cauliflower.toml")),
];

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// One of the configs shipped with the crate: `z2`, `basilica` or
    /// `cauliflower`.
    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidConfig(format!("no bundled config named {name}")))?;
        Self::from_toml(text)
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let map = self.map()?;
        let d = map.degree();
        if self.tree.base_curves.len() != d {
            return bad(format!("{} base curves for a map of degree {d}", self.tree.base_curves.len()));
        }
        if self.tree.base_curves.iter().any(|c| c.len() < 2) {
            return bad("base curves need at least two vertices".into());
        }
        if !self.sampler.weights.is_empty() {
            if self.sampler.weights.len() != d {
                return bad(format!("{} weights for degree {d}", self.sampler.weights.len()));
            }
            if self.sampler.weights.iter().any(|w| w.is_nan() || *w <= 0.0) {
                return bad("weights must be positive".into());
            }
            let sum: f64 = self.sampler.weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("weights sum to {sum}, not 1"));
            }
        }
        let positive = [
            ("tree.max_step", self.tree.max_step),
            ("diagnostics.condition_margin", self.diagnostics.condition_margin),
            ("diagnostics.tube_radius", self.diagnostics.tube_radius),
            ("diagnostics.claim_radius", self.diagnostics.claim_radius),
            ("diagnostics.coverage_eps", self.diagnostics.coverage_eps),
            ("harvest.tail_tol", self.harvest.tail_tol),
            ("harvest.dedupe_tol", self.harvest.dedupe_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.harvest.radii.is_empty() || self.harvest.radii.iter().any(|r| r.is_nan() || *r <= 0.0) {
            return bad("harvest.radii must be a nonempty list of positive radii".into());
        }
        if self.diagnostics.volume_regions.iter().any(|r| r.radius.is_nan() || r.radius <= 0.0) {
            return bad("volume region radii must be positive".into());
        }
        if self.raster.resolution == 0 || self.raster.cycle_period == 0 || self.census.max_period == 0 {
            return bad("raster.resolution, raster.cycle_period and census.max_period must be positive".into());
        }
        if self.diagnostics.volume_samples < 1000 {
            return bad("diagnostics.volume_samples must be at least 1000".into());
        }
        let b = self.raster.bounds;
        if !(b.xmax > b.xmin && b.ymax > b.ymin) {
            return bad("raster bounds are empty".into());
        }
        Ok(())
    }

    pub fn map(&self) -> Result<RationalMap> {
        RationalMap::try_from(self.map.clone())
    }

    pub fn root(&self) -> SpherePoint {
        point(self.tree.root)
    }

    pub fn base_vertices(&self) -> Vec<Vec<SpherePoint>> {
        self.tree
            .base_curves
            .iter()
            .map(|c| c.iter().copied().map(point).collect())
            .collect()
    }

    pub fn tree_options(&self) -> TreeOptions {
        let mut opts = TreeOptions::default();
        opts.lift.max_step = self.tree.max_step;
        opts
    }

    pub fn build_tree(&self, mode: &BuildMode) -> Result<CodingTree> {
        CodingTree::build(
            &self.map()?,
            self.root(),
            &self.base_vertices(),
            self.tree.depth,
            mode,
            self.tree_options(),
        )
    }

    pub fn sampler(&self, seed: u64) -> Result<BernoulliSampler> {
        let d = self.map()?.degree();
        if self.sampler.weights.is_empty() {
            BernoulliSampler::uniform(d, seed)
        } else {
            BernoulliSampler::new(self.sampler.weights.clone(), seed)
        }
    }

    /// The cycle of the configured period nearest `raster.cycle_point`.
    pub fn basin_target(&self) -> Result<BasinTarget> {
        let map = self.map()?;
        let near = point(self.raster.cycle_point);
        let orbits = find_periodic_orbits(&map, self.raster.cycle_period)?;
        let best = orbits
            .into_iter()
            .filter(|o| o.period == self.raster.cycle_period)
            .map(|o| {
                let d = o
                    .points
                    .iter()
                    .map(|q| crate::sphere::chordal_distance(*q, near))
                    .fold(f64::INFINITY, f64::min);
                (d, o)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, o)| o)
            .ok_or_else(|| Error::InvalidConfig(format!("no cycle of period {}", self.raster.cycle_period)))?;
        match best.kind {
            OrbitKind::Attracting => Ok(BasinTarget::Cycle(best)),
            OrbitKind::Parabolic => Ok(BasinTarget::Parabolic(best)),
            other => Err(Error::InvalidConfig(format!(
                "cycle near {near} is {}, not attracting or parabolic",
                other.as_str()
            ))),
        }
    }

    pub fn volume_regions(&self, base_curves: &[crate::lifting::Polyline]) -> Vec<Region> {
        if self.diagnostics.volume_regions.is_empty() {
            base_curves
                .iter()
                .map(|c| Region::Tube {
                    curve: c.clone(),
                    radius: self.diagnostics.tube_radius,
                })
                .collect()
        } else {
            self.diagnostics
                .volume_regions
                .iter()
                .map(|r| Region::Disc {
                    center: point(r.center),
                    radius: r.radius,
                })
                .collect()
        }
    }
}

/// `[re, im]` pair of a complex number.
pub fn pair(z: Complex64) -> Pair {
    [z.re, z.im]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_round_trip() {
        for name in RunConfig::bundled_names() {
            let cfg = RunConfig::bundled(name).unwrap();
            let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, again, "{name}");
        }
    }

    #[test]
    fn bundled_trees_build() {
        for name in RunConfig::bundled_names() {
            let cfg = RunConfig::bundled(name).unwrap();
            let tree = cfg.build_tree(&BuildMode::Prefixes(vec![])).unwrap();
            assert_eq!(tree.degree(), 2);
            cfg.basin_target().unwrap();
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let mut cfg = RunConfig::bundled("z2").unwrap();
        cfg.sampler.weights = vec![0.45, 0.45];
        let text = cfg.to_toml().unwrap();
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_wrong_curve_count_and_unknown_keys() {
        let mut cfg = RunConfig::bundled("z2").unwrap();
        cfg.tree.base_curves.pop();
        assert!(cfg.validate().is_err());
        let text = RunConfig::bundled("z2").unwrap().to_toml().unwrap() + "\nbogus = 1\n";
        assert!(matches!(RunConfig::from_toml(&text), Err(Error::ConfigParse(_))));
    }

    #[test]
    fn zero_harvest_budget_is_a_valid_config() {
        let mut cfg = RunConfig::bundled("z2").unwrap();
        cfg.harvest.n_max = 0;
        cfg.validate().unwrap();
    }
}
