//! Artifact writers: CSV tables, JSON Lines records, the PPM overlay and the
//! run manifest with content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::census::{BasinRaster, PeriodicOrbitRecord};
use crate::diagnostics::{ClaimReport, VolumeDecayEstimate};
use crate::error::{Error, Result};
use crate::periodics::{DensityReport, HarvestReport, PeriodicAccessRecord, TrialFailure};
use crate::pixmap::{Pixmap, Rgb};
use crate::sphere::SpherePoint;
use crate::tree::CodingTree;

const TREE_COLOR: Rgb = [250, 250, 250];
const GAMMA_COLOR: Rgb = [200, 30, 30];
const MARKER_COLOR: Rgb = [255, 0, 0];

/// `[re, im]`, or `null` for infinity.
pub fn point_json(p: SpherePoint) -> serde_json::Value {
    match p.finite() {
        Some(z) => json!([z.re, z.im]),
        None => serde_json::Value::Null,
    }
}

fn xy(p: SpherePoint) -> (String, String) {
    match p.finite() {
        Some(z) => (z.re.to_string(), z.im.to_string()),
        None => ("inf".into(), "inf".into()),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub fn write_census_csv(orbits: &[PeriodicOrbitRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "period,kind,x,y,multiplier_re,multiplier_im,multiplier_abs")?;
    for o in orbits {
        for p in &o.points {
            let (x, y) = xy(*p);
            writeln!(
                out,
                "{},{},{x},{y},{},{},{}",
                o.period,
                o.kind.as_str(),
                o.multiplier.re,
                o.multiplier.im,
                o.multiplier.norm()
            )?;
        }
    }
    Ok(())
}

pub fn write_volume_csv(series: &[VolumeDecayEstimate], out: &mut impl Write) -> Result<()> {
    writeln!(out, "region,n,epsilon_hat,stderr,samples")?;
    for e in series {
        writeln!(out, "{},{},{},{},{}", e.region_index, e.n, e.epsilon_hat, e.stderr, e.samples)?;
    }
    Ok(())
}

pub fn write_claim_csv(reports: &[ClaimReport], out: &mut impl Write) -> Result<()> {
    writeln!(out, "n,r,trials,successes,failures,fraction")?;
    for c in reports {
        writeln!(out, "{},{},{},{},{},{}", c.n, c.r, c.trials, c.successes, c.failures, c.fraction)?;
    }
    Ok(())
}

/// One JSON object per record.
pub fn harvest_record_json(r: &PeriodicAccessRecord) -> serde_json::Value {
    json!({
        "point": point_json(r.point),
        "period": r.period,
        "primitive_period": r.primitive_period,
        "multiplier": [r.multiplier.re, r.multiplier.im],
        "kind": r.kind.as_str(),
        "word": r.word.to_string(),
        "m": r.m,
        "trial": r.trial,
        "gamma_length": r.gamma_length,
        "gamma_length_bound": r.gamma_length_bound(),
        "seed_arc_length": r.gamma.length(),
        "boundary_distance": r.boundary_distance,
        "certificate": {
            "center": point_json(r.certificate.center),
            "radius": r.certificate.radius,
            "depth": r.certificate.depth,
            "lambda_est": r.certificate.lambda_est,
            "distortion_est": r.certificate.distortion_est,
            "margin": r.certificate.margin,
        },
    })
}

pub fn write_harvest_jsonl(records: &[PeriodicAccessRecord], out: &mut impl Write) -> Result<()> {
    for r in records {
        writeln!(out, "{}", harvest_record_json(r))?;
    }
    Ok(())
}

pub fn write_harvest_csv(records: &[PeriodicAccessRecord], out: &mut impl Write) -> Result<()> {
    writeln!(
        out,
        "x,y,period,primitive_period,multiplier_re,multiplier_im,word,gamma_length,boundary_distance,radius,lambda_est"
    )?;
    for r in records {
        let (x, y) = xy(r.point);
        writeln!(
            out,
            "{x},{y},{},{},{},{},{},{},{},{},{}",
            r.period,
            r.primitive_period,
            r.multiplier.re,
            r.multiplier.im,
            r.word,
            r.gamma_length,
            r.boundary_distance.map(|d| d.to_string()).unwrap_or_default(),
            r.certificate.radius,
            r.certificate.lambda_est
        )?;
    }
    Ok(())
}

/// Access curves as `record,index,x,y` rows.
pub fn write_access_curves_csv(records: &[PeriodicAccessRecord], out: &mut impl Write) -> Result<()> {
    writeln!(out, "record,index,seed,x,y")?;
    for (k, r) in records.iter().enumerate() {
        for (i, p) in r.access_curve.points().iter().enumerate() {
            let (x, y) = xy(*p);
            writeln!(out, "{k},{i},{},{x},{y}", u8::from(i < r.seed_points))?;
        }
    }
    Ok(())
}

pub fn write_failures_csv(failures: &[TrialFailure], out: &mut impl Write) -> Result<()> {
    writeln!(out, "trial,radius,stage,message")?;
    let mut sorted: Vec<&TrialFailure> = failures.iter().collect();
    sorted.sort_by(|a, b| a.trial.cmp(&b.trial).then(b.radius.total_cmp(&a.radius)));
    for f in sorted {
        writeln!(out, "{},{},{},\"{}\"", f.trial, f.radius, f.stage, f.message.replace('"', "'"))?;
    }
    Ok(())
}

pub fn write_density_csv(boundary: &[SpherePoint], report: &DensityReport, out: &mut impl Write) -> Result<()> {
    writeln!(out, "x,y,distance")?;
    for (p, d) in boundary.iter().zip(&report.distances) {
        let (x, y) = xy(*p);
        writeln!(out, "{x},{y},{d}")?;
    }
    Ok(())
}

/// Summary of a harvest without the per-record curves.
pub fn harvest_summary(report: &HarvestReport) -> serde_json::Value {
    json!({
        "records": report.records.len(),
        "duplicates": report.duplicates,
        "failed_attempts": report.failures.len(),
        "slow_convergence_retries": report.slow_retries,
        "covering_radius": report.density.as_ref().map(|d| d.covering_radius),
        "mean_boundary_distance": report.density.as_ref().map(|d| d.mean_distance),
    })
}

fn draw_polyline(img: &mut Pixmap, raster: &BasinRaster, pts: &[SpherePoint], color: Rgb) {
    let pix: Vec<Option<(i64, i64)>> = pts.iter().map(|p| p.finite().map(|z| raster.pixel_of(z))).collect();
    for w in pix.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            img.line(a, b, color);
        }
    }
}

/// Basin colors with black boundary cells, tree edges of `tree_words`, the
/// access curves and a marker at every harvested point.
pub fn render_overlay(
    raster: &BasinRaster,
    tree: &CodingTree,
    tree_words: &[Vec<u8>],
    records: &[PeriodicAccessRecord],
    marker_size: i64,
) -> Result<Pixmap> {
    let fp = tree.map().fingerprint();
    if raster.map_fingerprint != fp {
        return Err(Error::MismatchedMap {
            left: raster.map_fingerprint.clone(),
            right: fp,
        });
    }
    let mut img = raster.to_pixmap();
    for c in tree.base_curves() {
        draw_polyline(&mut img, raster, c.points(), TREE_COLOR);
    }
    for w in tree_words {
        for k in 2..=w.len() {
            let e = tree.edge(&w[..k])?;
            draw_polyline(&mut img, raster, e.points(), TREE_COLOR);
        }
    }
    for r in records {
        draw_polyline(&mut img, raster, r.access_curve.points(), GAMMA_COLOR);
    }
    for r in records {
        if let Some(z) = r.point.finite() {
            img.marker(raster.pixel_of(z), marker_size, MARKER_COLOR);
        }
    }
    Ok(img)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub wall_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Short stage results, such as record counts or pass flags.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(config_name: &str, config_hash: String, seed: u64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert(env!("CARGO_PKG_NAME").to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest".to_string(), "1".to_string());
        Self {
            config_name: config_name.to_string(),
            config_hash,
            seed,
            versions,
            stages: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.status == StageStatus::Pass)
    }

    /// File hashes by path, the part of the manifest that must repeat
    /// across identical runs.
    pub fn file_hashes(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|f| (f.path.clone(), f.sha256.clone())).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::ConfigParse(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Files whose content no longer matches the recorded hash, relative to
    /// `dir`. Missing files are reported too.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| sha256_file(&dir.join(&f.path)).map(|h| h != f.sha256).unwrap_or(true))
            .map(|f| f.path.clone())
            .collect()
    }
}

/// Creates files under one directory and records their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `name` through `fill` and records its hash.
    pub fn write(&mut self, name: &str, fill: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        {
            let mut w = BufWriter::new(fs::File::create(&path)?);
            fill(&mut w)?;
            w.flush()?;
        }
        let bytes = fs::read(&path)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::ConfigParse(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::census::{rasterize_basin, BasinTarget, Bounds};
    use crate::map::RationalMap;
    use num_complex::Complex64;

    fn z2_raster(n: usize) -> (RationalMap, BasinRaster) {
        let f = RationalMap::quadratic(Complex64::new(0.0, 0.0));
        let rec = PeriodicOrbitRecord::from_point(&f, SpherePoint::from_re_im(0.0, 0.0), 1);
        let r = rasterize_basin(&f, &BasinTarget::Cycle(rec), Bounds::square(1.5), (n, n), 100).unwrap();
        (f, r)
    }

    fn z2_tree(f: &RationalMap) -> CodingTree {
        let p = SpherePoint::from_re_im;
        CodingTree::new(
            f,
            p(0.5, 0.0),
            &[
                vec![p(0.5, 0.0), p(0.5f64.sqrt(), 0.0)],
                vec![p(0.5, 0.0), p(0.0, 0.6), p(-(0.5f64.sqrt()), 0.0)],
            ],
            3,
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn overlay_without_records_is_a_valid_image() {
        let (f, raster) = z2_raster(64);
        let tree = z2_tree(&f);
        let img = render_overlay(&raster, &tree, &[vec![1, 2, 1]], &[], 2).unwrap();
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n64 64\n255\n"));
        assert_eq!(buf.len(), 13 + 64 * 64 * 3);
    }

    #[test]
    fn one_pixel_raster() {
        let (f, raster) = z2_raster(1);
        let img = render_overlay(&raster, &z2_tree(&f), &[], &[], 2).unwrap();
        assert_eq!((img.width, img.height), (1, 1));
    }

    #[test]
    fn overlay_rejects_other_maps() {
        let (_, raster) = z2_raster(8);
        let g = RationalMap::quadratic(Complex64::new(-1.0, 0.0));
        let p = SpherePoint::from_re_im;
        let tree = CodingTree::new(
            &g,
            p(0.3, 0.0),
            &[vec![p(0.3, 0.0), p(1.3f64.sqrt(), 0.0)], vec![p(0.3, 0.0), p(0.0, 0.5), p(-(1.3f64.sqrt()), 0.0)]],
            2,
            Default::default(),
        )
        .unwrap();
        assert!(matches!(
            render_overlay(&raster, &tree, &[], &[], 2),
            Err(Error::MismatchedMap { .. })
        ));
    }

    #[test]
    fn manifest_verifies_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write("a.csv", |o| Ok(writeln!(o, "x,y\n1,2")?)).unwrap();
        let mut m = RunManifest::new("t", "h".into(), 1);
        m.files = w.files().to_vec();
        assert!(m.verify(dir.path()).is_empty());
        fs::write(dir.path().join("a.csv"), "changed").unwrap();
        assert_eq!(m.verify(dir.path()), vec!["a.csv".to_string()]);
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap().file_hashes(), m.file_hashes());
    }
}
