use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use coding_trees::config::RunConfig;
use coding_trees::output::StageStatus;
use coding_trees::pipeline::{run_pipeline, verify_run, PipelineOptions, Stage, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "coding-trees", version, about = "Coding trees, boundary periodic points and access curves")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Periodic orbit census and basin raster.
    Census(RunArgs),
    /// Build the full coding tree and dump it.
    Tree(RunArgs),
    /// Condition checks, volume decay, claim trend and coverage.
    Diagnose(RunArgs),
    /// Harvest boundary periodic points with access curves.
    Harvest(RunArgs),
    /// Verify the manifest of a finished run and print a summary.
    Report {
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage, in order.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file, or the name of a bundled config (z2, basilica, cauliflower).
    #[arg(long)]
    config: String,
    /// Output directory; defaults to the config's out_dir, then `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-stage wall-clock limit in seconds.
    #[arg(long = "stage-timeout")]
    stage_timeout: Option<u64>,
}

fn load_config(arg: &str) -> coding_trees::Result<RunConfig> {
    let path = Path::new(arg);
    if !path.exists() && RunConfig::bundled_names().any(|n| n == arg) {
        return RunConfig::bundled(arg);
    }
    RunConfig::load(path)
}

fn run(args: RunArgs, stages: &[Stage]) -> ExitCode {
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let out = args
        .out
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let mut opts = PipelineOptions::new(&out);
    opts.seed = args.seed;
    opts.stage_timeout = args.stage_timeout.map(Duration::from_secs);
    opts.stages = stages.to_vec();
    match run_pipeline(&cfg, &opts) {
        Ok(manifest) => {
            for s in &manifest.stages {
                println!("{:<12} PASS {:>8.2}s  {}", s.stage, s.wall_secs, s.summary);
            }
            println!("wrote {} files to {}", manifest.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(failure) => {
            if let Some(m) = &failure.manifest {
                for s in m.stages.iter().filter(|s| s.status == StageStatus::Pass) {
                    println!("{:<12} PASS {:>8.2}s", s.stage, s.wall_secs);
                }
            }
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code() as u8)
        }
    }
}

fn report(out: &Path) -> ExitCode {
    let (manifest, bad) = match verify_run(out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    println!("run {} (seed {}, config {})", manifest.config_name, manifest.seed, &manifest.config_hash[..12]);
    for s in &manifest.stages {
        let status = match s.status {
            StageStatus::Pass => "PASS",
            StageStatus::Fail => "FAIL",
        };
        println!("{:<12} {status} {:>8.2}s  {}", s.stage, s.wall_secs, s.error.as_deref().unwrap_or(""));
    }
    println!("{} files listed, {} mismatched", manifest.files.len(), bad.len());
    for f in &bad {
        println!("  mismatch: {f}");
    }
    if !bad.is_empty() {
        return ExitCode::FAILURE;
    }
    match manifest.stages.iter().find(|s| s.status == StageStatus::Fail) {
        Some(s) => {
            let code = Stage::ALL.iter().find(|st| st.name() == s.stage).map(|st| st.exit_code()).unwrap_or(1);
            ExitCode::from(code as u8)
        }
        None => ExitCode::SUCCESS,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.verb {
        Verb::Census(a) => run(a, &[Stage::Census, Stage::Raster]),
        Verb::Tree(a) => run(a, &[Stage::Tree]),
        Verb::Diagnose(a) => run(a, &[Stage::Census, Stage::Raster, Stage::Diagnostics]),
        Verb::Harvest(a) => run(a, &[Stage::Census, Stage::Raster, Stage::Tree, Stage::Harvest, Stage::Density]),
        Verb::Run(a) => run(a, &Stage::ALL),
        Verb::Report { out } => report(&out),
    }
}
