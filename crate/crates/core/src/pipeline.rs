//! The end-to-end run: census, basin raster, diagnostics, tree, harvest,
//! density report and overlay image, each writing hashed artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde_json::json;

use crate::census::{basin_frontier, boundary_point_set, find_periodic_orbits, rasterize_basin, write_points_csv, BasinRaster, OrbitKind, PeriodicOrbitRecord};
use crate::config::{BoundaryKind, RunConfig};
use crate::diagnostics::{
    check_condition_i, claim_check, derive_seed, lyapunov_estimate, sampled_coding_point, support_density_check,
    volume_decay_series,
};
use crate::error::{Error, Result};
use crate::output::{self, point_json, ArtifactWriter, RunManifest, StageRecord, StageStatus};
use crate::periodics::{attach_boundary_distances, harvest, DensityReport, HarvestReport};
use crate::sphere::SpherePoint;
use crate::tree::{BuildMode, CodingTree};

/// Exit code for configs rejected before any stage runs.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Census,
    Raster,
    Diagnostics,
    Tree,
    Harvest,
    Density,
    Overlay,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Census,
        Stage::Raster,
        Stage::Diagnostics,
        Stage::Tree,
        Stage::Harvest,
        Stage::Density,
        Stage::Overlay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Census => "census",
            Stage::Raster => "raster",
            Stage::Diagnostics => "diagnostics",
            Stage::Tree => "tree",
            Stage::Harvest => "harvest",
            Stage::Density => "density",
            Stage::Overlay => "overlay",
        }
    }

    /// Process exit code when this stage fails.
    pub fn exit_code(self) -> i32 {
        3 + self as i32
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Harvest => &[Stage::Tree],
            Stage::Density => &[Stage::Raster, Stage::Harvest],
            Stage::Overlay => &[Stage::Raster, Stage::Tree],
            _ => &[],
        }
    }

    /// `stages` plus everything they depend on, in pipeline order.
    pub fn closure(stages: &[Stage]) -> Vec<Stage> {
        let mut set: Vec<Stage> = stages.to_vec();
        loop {
            let extra: Vec<Stage> = set
                .iter()
                .flat_map(|s| s.requires().iter().copied())
                .filter(|s| !set.contains(s))
                .collect();
            if extra.is_empty() {
                break;
            }
            set.extend(extra);
        }
        set.sort();
        set.dedup();
        set
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub out_dir: PathBuf,
    /// Replaces the config's master seed.
    pub seed: Option<u64>,
    pub stage_timeout: Option<Duration>,
    pub stages: Vec<Stage>,
}

impl PipelineOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: None,
            stage_timeout: None,
            stages: Stage::ALL.to_vec(),
        }
    }
}

/// A failed run. `manifest` is the partial manifest written before the
/// failure, when the run got that far.
#[derive(Debug)]
pub struct PipelineFailure {
    pub stage: Option<Stage>,
    pub error: Error,
    pub manifest: Option<Box<RunManifest>>,
}

impl PipelineFailure {
    pub fn exit_code(&self) -> i32 {
        self.stage.map(Stage::exit_code).unwrap_or(EXIT_CONFIG)
    }
}

impl std::fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage {} failed: {}", s.name(), self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for PipelineFailure {}

/// Runs `f` on a worker thread and gives up after `limit`. A timed-out
/// worker is left to finish on its own; the caller is expected to exit.
fn with_timeout<T: Send + 'static>(
    stage: Stage,
    limit: Option<Duration>,
    f: impl FnOnce() -> Result<T> + Send + 'static,
) -> Result<T> {
    let Some(limit) = limit else { return f() };
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let _ = tx.send(f());
    });
    match rx.recv_timeout(limit) {
        Ok(r) => r,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(Error::StageTimeout {
            stage: stage.name().into(),
            limit_secs: limit.as_secs(),
        }),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(Error::StageAborted {
            stage: stage.name().into(),
            detail: "worker panicked".into(),
        }),
    }
}

#[derive(Default)]
struct State {
    census: Option<Arc<Vec<PeriodicOrbitRecord>>>,
    raster: Option<Arc<BasinRaster>>,
    boundary: Option<Arc<Vec<SpherePoint>>>,
    tree: Option<Arc<CodingTree>>,
    harvest: Option<Arc<HarvestReport>>,
}

struct Run<'a> {
    cfg: Arc<RunConfig>,
    seed: u64,
    opts: &'a PipelineOptions,
    writer: ArtifactWriter,
    manifest: RunManifest,
    state: State,
}

/// Seed stream indices, one per randomized step; stage seeds are
/// `derive_seed(master, index)`.
pub mod seeds {
    pub const VOLUME: u64 = 1;
    pub const CLAIM: u64 = 2;
    pub const COVERAGE: u64 = 3;
    pub const HARVEST: u64 = 4;
    pub const OVERLAY: u64 = 5;
    pub const LYAPUNOV: u64 = 6;
}

/// Runs the configured stages and writes `manifest.json` into the output
/// directory, also after a failed stage.
pub fn run_pipeline(cfg: &RunConfig, opts: &PipelineOptions) -> std::result::Result<RunManifest, PipelineFailure> {
    let fail_early = |error| PipelineFailure {
        stage: None,
        error,
        manifest: None,
    };
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(fail_early)?;
    let cfg_text = cfg.to_toml().map_err(fail_early)?;
    let config_hash = output::sha256_hex(cfg_text.as_bytes());
    let writer = ArtifactWriter::new(&opts.out_dir).map_err(fail_early)?;
    let mut run = Run {
        seed: cfg.seed,
        manifest: RunManifest::new(&cfg.name, config_hash, cfg.seed),
        cfg: Arc::new(cfg),
        opts,
        writer,
        state: State::default(),
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    if let Err(e) = run.writer.write("config.toml", |w| Ok(w.write_all(cfg_text.as_bytes())?)) {
        return Err(fail_early(e));
    }
    for stage in Stage::closure(&opts.stages) {
        let start = Instant::now();
        let result = run.stage(stage);
        let wall_secs = start.elapsed().as_secs_f64();
        let (status, error, summary) = match &result {
            Ok(summary) => (StageStatus::Pass, None, summary.clone()),
            Err(e) => (StageStatus::Fail, Some(e.to_string()), serde_json::Value::Null),
        };
        run.manifest.stages.push(StageRecord {
            stage: stage.name().into(),
            status,
            wall_secs,
            error,
            summary,
        });
        run.manifest.files = run.writer.files().to_vec();
        if let Err(error) = result {
            let _ = run.manifest.write(&manifest_path);
            return Err(PipelineFailure {
                stage: Some(stage),
                error,
                manifest: Some(Box::new(run.manifest)),
            });
        }
    }
    run.manifest
        .write(&manifest_path)
        .map_err(|e| PipelineFailure {
            stage: None,
            error: e,
            manifest: None,
        })?;
    Ok(run.manifest)
}

impl Run<'_> {
    fn stage(&mut self, stage: Stage) -> Result<serde_json::Value> {
        match stage {
            Stage::Census => self.census(),
            Stage::Raster => self.raster(),
            Stage::Diagnostics => self.diagnostics(),
            Stage::Tree => self.tree(),
            Stage::Harvest => self.harvest(),
            Stage::Density => self.density(),
            Stage::Overlay => self.overlay(),
        }
    }

    fn timed<T: Send + 'static>(&self, stage: Stage, f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
        with_timeout(stage, self.opts.stage_timeout, f)
    }

    fn census(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let orbits = self.timed(Stage::Census, move || {
            let map = cfg.map()?;
            let mut all = Vec::new();
            for n in 1..=cfg.census.max_period {
                all.extend(find_periodic_orbits(&map, n)?);
            }
            Ok(all)
        })?;
        self.writer.write("census.csv", |w| output::write_census_csv(&orbits, w))?;
        let count = |k: OrbitKind| orbits.iter().filter(|o| o.kind == k).count();
        let summary = json!({
            "cycles": orbits.len(),
            "attracting": count(OrbitKind::Attracting),
            "repelling": count(OrbitKind::Repelling),
            "parabolic": count(OrbitKind::Parabolic),
            "indifferent": count(OrbitKind::Indifferent),
        });
        self.state.census = Some(Arc::new(orbits));
        Ok(summary)
    }

    fn raster(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let (raster, boundary) = self.timed(Stage::Raster, move || {
            let map = cfg.map()?;
            let target = cfg.basin_target()?;
            let r = &cfg.raster;
            let raster = rasterize_basin(&map, &target, r.bounds, (r.resolution, r.resolution), r.max_iters)?;
            let boundary = match r.boundary {
                BoundaryKind::Immediate => boundary_point_set(&raster)?,
                BoundaryKind::Full => basin_frontier(&raster)?,
            };
            Ok((raster, boundary))
        })?;
        self.writer.write("boundary.csv", |w| write_points_csv(&boundary, w))?;
        self.writer.write("basin.ppm", |w| Ok(raster.to_pixmap().write_ppm(w)?))?;
        let summary = json!({
            "boundary_points": boundary.len(),
            "cell_size": raster.cell_size(),
            "basin_cells": raster.labels.iter().filter(|l| l.is_some()).count(),
        });
        self.state.raster = Some(Arc::new(raster));
        self.state.boundary = Some(Arc::new(boundary));
        Ok(summary)
    }

    fn diagnostics(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let seed = self.seed;
        let boundary = self.state.boundary.clone();
        let (report, volume, claims) = self.timed(Stage::Diagnostics, move || {
            let map = cfg.map()?;
            let tree = CodingTree::new(&map, cfg.root(), &cfg.base_vertices(), cfg.tree.depth, cfg.tree_options())?;
            let d = &cfg.diagnostics;
            let cond = check_condition_i(&map, tree.base_curves(), d.condition_depth, d.condition_margin)?;

            let mut volume = Vec::new();
            for (j, region) in cfg.volume_regions(tree.base_curves()).iter().enumerate() {
                let s = derive_seed(derive_seed(seed, seeds::VOLUME), j as u64);
                volume.extend(volume_decay_series(&map, region, j, d.volume_n_max, d.volume_samples, s));
            }
            let decays = (0..cfg.volume_regions(tree.base_curves()).len()).all(|j| {
                let series: Vec<f64> = volume.iter().filter(|e| e.region_index == j).map(|e| e.epsilon_hat).collect();
                series.last() < series.first() || series.first() == Some(&0.0)
            });

            let claim_sampler = cfg.sampler(derive_seed(seed, seeds::CLAIM))?;
            let claims = claim_check(&tree, &claim_sampler, &d.claim_depths, d.claim_radius, d.claim_trials);

            let lyap_sampler = cfg.sampler(derive_seed(seed, seeds::LYAPUNOV))?;
            let starts: Vec<SpherePoint> = (0..64)
                .filter_map(|t| sampled_coding_point(&tree, &lyap_sampler, t, 1e-6, 60).ok())
                .collect();
            let lyapunov = lyapunov_estimate(&map, &starts, d.lyapunov_burn_in, d.lyapunov_length);

            let coverage = match &boundary {
                Some(b) => {
                    let s = cfg.sampler(derive_seed(seed, seeds::COVERAGE))?;
                    Some(support_density_check(&tree, &s, b, d.coverage_trials, d.coverage_eps))
                }
                None => None,
            };
            let report = json!({
                "condition_i": {
                    "pass": cond.pass,
                    "min_distance": cond.min_distance,
                    "margin": cond.margin,
                    "closest_curve": cond.closest_curve + 1,
                    "closest_point": point_json(cond.closest_point),
                    "forbidden_points": cond.forbidden_points,
                },
                "condition_ii": { "decreasing": decays },
                "lyapunov": {
                    "orbits": starts.len(),
                    "estimate": lyapunov.as_ref().ok(),
                    "error": lyapunov.as_ref().err().map(|e| e.to_string()),
                },
                "claim": claims.iter().map(|c| json!({"n": c.n, "fraction": c.fraction})).collect::<Vec<_>>(),
                "coverage": coverage,
            });
            Ok((report, volume, claims))
        })?;
        self.writer.write("volume.csv", |w| output::write_volume_csv(&volume, w))?;
        self.writer.write("claim.csv", |w| output::write_claim_csv(&claims, w))?;
        self.writer.write_json("diagnostics.json", &report)?;
        Ok(json!({
            "condition_i": report["condition_i"]["pass"],
            "condition_ii": report["condition_ii"]["decreasing"],
        }))
    }

    fn tree(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let (tree, residual) = self.timed(Stage::Tree, move || {
            let tree = cfg.build_tree(&BuildMode::Full)?;
            let residual = tree.commutation_residual(&tree.words())?;
            Ok((tree, residual))
        })?;
        self.writer.write("tree.jsonl", |w| tree.dump(w))?;
        let summary = json!({
            "depth": tree.depth(),
            "edges": tree.edge_count(),
            "commutation_residual": residual,
        });
        self.state.tree = Some(Arc::new(tree));
        Ok(summary)
    }

    fn harvest(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let seed = self.seed;
        let tree = self.state.tree.clone().expect("tree stage ran");
        let boundary = self.state.boundary.clone();
        let report = self.timed(Stage::Harvest, move || {
            let sampler = cfg.sampler(derive_seed(seed, seeds::HARVEST))?;
            let mut report = harvest(&tree, &sampler, &cfg.harvest, None)?;
            if let Some(b) = &boundary {
                attach_boundary_distances(&mut report.records, b);
            }
            Ok(report)
        })?;
        self.writer.write("harvest.jsonl", |w| output::write_harvest_jsonl(&report.records, w))?;
        self.writer.write("harvest.csv", |w| output::write_harvest_csv(&report.records, w))?;
        self.writer.write("access_curves.csv", |w| output::write_access_curves_csv(&report.records, w))?;
        self.writer.write("harvest_failures.csv", |w| output::write_failures_csv(&report.failures, w))?;
        let lyap: Vec<f64> = report
            .records
            .iter()
            .map(|r| r.multiplier.norm().ln() / r.primitive_period as f64)
            .collect();
        let mut summary = output::harvest_summary(&report);
        if let Some(obj) = summary.as_object_mut() {
            obj.remove("covering_radius");
            obj.remove("mean_boundary_distance");
        }
        let dists: Vec<f64> = report.records.iter().filter_map(|r| r.boundary_distance).collect();
        summary["max_boundary_distance"] = json!(dists.iter().copied().fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d)))));
        summary["mean_orbit_lyapunov"] = json!(lyap.iter().sum::<f64>() / lyap.len().max(1) as f64);
        self.state.harvest = Some(Arc::new(report));
        Ok(summary)
    }

    fn density(&mut self) -> Result<serde_json::Value> {
        let boundary = self.state.boundary.clone().expect("raster stage ran");
        let report = self.state.harvest.clone().expect("harvest stage ran");
        let density = self.timed(Stage::Density, move || {
            let pts: Vec<SpherePoint> = report.records.iter().map(|r| r.point).collect();
            Ok(DensityReport::compute(&boundary, &pts))
        })?;
        let boundary = self.state.boundary.clone().expect("raster stage ran");
        self.writer.write("density.csv", |w| output::write_density_csv(&boundary, &density, w))?;
        Ok(json!({
            "boundary_points": density.boundary_points,
            "covering_radius": density.covering_radius,
            "mean_distance": density.mean_distance,
        }))
    }

    fn overlay(&mut self) -> Result<serde_json::Value> {
        let cfg = self.cfg.clone();
        let seed = self.seed;
        let raster = self.state.raster.clone().expect("raster stage ran");
        let tree = self.state.tree.clone().expect("tree stage ran");
        let harvest = self.state.harvest.clone();
        let img = self.timed(Stage::Overlay, move || {
            let sampler = cfg.sampler(derive_seed(seed, seeds::OVERLAY))?;
            let o = &cfg.overlay;
            let words: Vec<Vec<u8>> = (0..o.tree_words as u64).map(|t| sampler.word(t, o.tree_depth)).collect();
            let records = harvest.as_ref().map(|h| h.records.as_slice()).unwrap_or(&[]);
            output::render_overlay(&raster, &tree, &words, records, o.marker_size)
        })?;
        self.writer.write("overlay.ppm", |w| Ok(img.write_ppm(w)?))?;
        Ok(json!({ "width": img.width, "height": img.height }))
    }
}

/// Checks a finished run directory: the manifest exists and every file it
/// lists matches its hash. Returns the manifest and the mismatched files.
pub fn verify_run(dir: &Path) -> Result<(RunManifest, Vec<String>)> {
    let manifest = RunManifest::load(&dir.join("manifest.json"))?;
    let bad = manifest.verify(dir);
    Ok((manifest, bad))
}
