//! Runs every stage on a bundled config and verifies the written manifest.
//!
//! `cargo run --release --example run_pipeline -- basilica out/basilica`

use coding_trees::config::RunConfig;
use coding_trees::pipeline::{run_pipeline, verify_run, PipelineOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "z2".into());
    let out = args.next().unwrap_or_else(|| format!("out/{name}"));
    let cfg = RunConfig::bundled(&name)?;

    let manifest = run_pipeline(&cfg, &PipelineOptions::new(&out))?;
    for s in &manifest.stages {
        println!("{:<12} {:>7.2}s  {}", s.stage, s.wall_secs, s.summary);
    }
    let (_, bad) = verify_run(out.as_ref())?;
    println!("{} files in {out}, {} hash mismatches", manifest.files.len(), bad.len());
    Ok(())
}
