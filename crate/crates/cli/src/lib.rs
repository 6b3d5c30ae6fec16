//! Command-line front end for the landmark sign recognition pipeline.

pub mod bench;
pub mod config;
pub mod encode;
pub mod error;
pub mod ingest;
pub mod report;
pub mod run;
pub mod synth;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use signenc::classifier::load_model;
use signenc::landmarks::BodyKeepSet;

use crate::config::{parse_override, RunConfig};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "signenc", version, about = "Sign recognition from pose landmarks encoded as images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert OpenPose keypoint JSON trees into landmark files and a manifest.
    Ingest(IngestArgs),
    /// Generate a synthetic gesture dataset.
    Synth(SynthArgs),
    /// Write encoded images for a dataset.
    Encode(EncodeArgs),
    /// Train and evaluate every nested leave-one-person-out section.
    Run(RunArgs),
    /// Run the augmentation/uniformization ablation.
    Ablate(AblateArgs),
    /// Measure single-sequence inference latency.
    Bench(BenchArgs),
    /// Rebuild a run's aggregate report from its section metrics.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `<signer>/<label>/<recording>/*.json` tree.
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation CSV for recordings holding several takes.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Pixel size of the source video, used to normalize coordinates.
    #[arg(long, default_value_t = 640.0)]
    pub frame_width: f64,
    #[arg(long, default_value_t = 480.0)]
    pub frame_height: f64,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Frames kept before and after each annotated take.
    #[arg(long, default_value_t = signenc::landmarks::DEFAULT_SEGMENT_PAD)]
    pub pad: usize,
    /// Comma-separated BODY_25 indices of the 14 body landmarks to keep.
    #[arg(long, value_delimiter = ',')]
    pub body_keep: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 6)]
    pub signers: usize,
    #[arg(long, default_value_t = 5)]
    pub takes: usize,
    #[arg(long, default_value_t = 40)]
    pub min_frames: usize,
    #[arg(long, default_value_t = 80)]
    pub max_frames: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long = "png-out", alias = "out")]
    pub png_out: PathBuf,
    /// Apply training augmentation seeded by this run seed.
    #[arg(long)]
    pub augment_seed: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    #[arg(long)]
    pub uniformize: bool,
    /// Also write the transformed landmark sequences.
    #[arg(long)]
    pub landmarks: bool,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run only the first N sections.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Override a config key, e.g. `--set model.epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Discard results produced under a different config.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// All four augmentation/uniformization combinations.
    #[arg(long)]
    pub grid: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sequences to time; synthetic when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub sequences: usize,
    #[arg(long, default_value_t = 60)]
    pub frames: usize,
    #[arg(long, default_value_t = 5)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the latency statistics as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub run_dir: PathBuf,
}

impl RunArgs {
    pub fn assemble(&self) -> CliResult<RunConfig> {
        let mut overrides = Vec::new();
        if let Some(d) = &self.dataset {
            overrides.push(("dataset".to_string(), Value::from(d.display().to_string())));
        }
        if let Some(o) = &self.output {
            overrides.push(("output".to_string(), Value::from(o.display().to_string())));
        }
        if let Some(s) = self.seed {
            overrides.push(("seed".to_string(), Value::from(s)));
        }
        if let Some(l) = self.limit {
            overrides.push(("splits.limit".to_string(), Value::from(l)));
        }
        for s in &self.set {
            overrides.push(parse_override(s)?);
        }
        Ok(RunConfig::assemble(self.config.as_deref(), &overrides)?)
    }

    fn options(&self) -> run::RunOptions {
        run::RunOptions {
            run_id: self.run_id.clone(),
            force: self.force,
        }
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest(a) => {
            let summary = ingest::ingest(&ingest::IngestOptions {
                root: a.root,
                out: a.out,
                annotations: a.annotations,
                frame_width: a.frame_width,
                frame_height: a.frame_height,
                fps: a.fps,
                pad: a.pad,
                body_keep: match &a.body_keep {
                    Some(idx) => BodyKeepSet::new(idx)?,
                    None => BodyKeepSet::default(),
                },
            })?;
            let m = &summary.manifest;
            println!(
                "{} samples, {} classes, {} signers from {} recordings",
                m.samples.len(),
                m.classes.len(),
                m.signers.len(),
                summary.recordings
            );
            if !summary.failures.is_empty() {
                return Err(CliError::Ingest {
                    failed: summary.failures.len(),
                    total: summary.recordings,
                });
            }
        }
        Command::Synth(a) => {
            let spec = synth::SyntheticSpec {
                classes: a.classes,
                signers: a.signers,
                takes: a.takes,
                min_frames: a.min_frames,
                max_frames: a.max_frames,
                noise: a.noise,
                seed: a.seed,
            };
            let m = synth::generate(&spec, &a.out)?;
            println!("{} samples written to {}", m.samples.len(), a.out.display());
        }
        Command::Encode(a) => {
            let n = encode::encode_dataset(&encode::EncodeOptions {
                dataset: a.dataset,
                out: a.png_out,
                augment_seed: a.augment_seed,
                epoch: a.epoch,
                uniformize: a.uniformize,
                landmarks: a.landmarks,
                limit: a.limit,
            })?;
            println!("{n} images written");
        }
        Command::Run(a) => {
            let cfg = a.assemble()?;
            let (dir, report) = run::execute_run(&cfg, &a.options())?;
            println!("{} sections, report in {}", report.sections.len(), dir.display());
            println!("Accuracy | Precision | Recall | F1-score");
            println!("{}", report.table_row());
        }
        Command::Ablate(a) => {
            let cfg = a.run.assemble()?;
            let (dir, rows) = run::execute_ablation(&cfg, &a.run.options(), a.grid)?;
            print!("{}", run::ablation_table(&rows));
            println!("ablation written to {}", dir.display());
        }
        Command::Bench(a) => {
            let state = load_model(&a.model)?;
            let seqs = bench::bench_sequences(&bench::BenchOptions {
                model: a.model.clone(),
                dataset: a.dataset,
                sequences: a.sequences,
                frames: a.frames,
                warmup: a.warmup,
                seed: a.seed,
            })?;
            let stats = bench::bench(&state, &seqs, a.warmup)?;
            println!(
                "{} sequences of {} frames: median {:.3} ms, p95 {:.3} ms, mean {:.3} ms",
                stats.count, a.frames, stats.median_ms, stats.p95_ms, stats.mean_ms
            );
            if let Some(p) = a.json {
                report::write_json(&p, &stats)?;
            }
        }
        Command::Report(a) => {
            let r = report::rebuild_report(&a.run_dir)?;
            println!("{}", r.table_row());
        }
    }
    Ok(())
}
