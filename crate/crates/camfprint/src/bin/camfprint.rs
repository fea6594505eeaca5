//! Thin CLI over the library pipeline: each subcommand resolves the
//! experiment config, delegates to `camfprint::pipeline` and prints a
//! summary (or JSON with --json).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use camfprint::pipeline::{self, ExperimentConfig, IngestSource};
use camfprint::similarity::PairSampling;
use camfprint::synth::SynthConfig;
use camfprint::Error;

#[derive(Parser)]
#[command(name = "camfprint", version, about = "Device-level camera fingerprint matching")]
struct Cli {
    /// Experiment config JSON; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; stage seeds derive from it unless set explicitly.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Where all artifacts live.
    #[arg(long, global = true, env = "CAMFPRINT_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Recompute stages whose artifacts already exist.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the labeled manifest (Dresden-style tree or synthetic data).
    Ingest(IngestArgs),
    /// Run a training phase (1: signature network, 2: similarity network).
    Train(TrainArgs),
    /// Extract and store signatures for every manifest image.
    Extract,
    /// Score two images and print a SAME/DIFFERENT verdict.
    Match { image_a: PathBuf, image_b: PathBuf },
    /// Compute the similarity matrix on the test split.
    Evaluate(EvalArgs),
    /// Re-render the heatmap from a stored evaluation report.
    Plot,
}

#[derive(Args)]
struct IngestArgs {
    /// Root of a directory tree of Model_Instance_Index-named images.
    #[arg(long, conflicts_with = "synthetic")]
    dresden: Option<PathBuf>,

    /// Generate a synthetic dataset instead of reading one.
    #[arg(long)]
    synthetic: bool,

    #[arg(long, default_value_t = 8)]
    devices: usize,

    #[arg(long, default_value_t = 40)]
    per_device: usize,

    /// Square image size for the synthetic generator.
    #[arg(long, default_value_t = 64)]
    image_size: usize,

    #[arg(long, default_value_t = 0.10)]
    prnu: f64,

    #[arg(long, default_value_t = 0.03)]
    fpn: f64,

    #[arg(long, default_value_t = 0.01)]
    shot: f64,

    #[arg(long, default_value_t = 5)]
    scene_pool: usize,

    /// Drop devices with fewer images than this.
    #[arg(long, default_value_t = 2)]
    min_images: usize,

    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,

    /// Fraction of the train pool carved out for validation.
    #[arg(long, default_value_t = 0.15)]
    val_frac: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    phase: u8,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    stop_epoch: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    #[arg(long)]
    learning_rate: Option<f64>,

    /// Square network input size (phase 1).
    #[arg(long)]
    input_size: Option<usize>,

    /// Pair sampling for phase 2: all | balanced.
    #[arg(long)]
    pair_sampling: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    n_pairs: Option<usize>,

    /// Exit nonzero when overall accuracy falls below this floor.
    #[arg(long)]
    min_accuracy: Option<f64>,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            // reuse the stored config from a previous stage when present
            let probe = ExperimentConfig {
                output_dir: cli.output_dir.clone().unwrap_or_else(|| "camfprint-out".into()),
                ..ExperimentConfig::default()
            };
            if probe.config_file().exists() {
                ExperimentConfig::load(&probe.config_file())?
            } else {
                probe
            }
        }
    };
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn emit<T: serde::Serialize>(json: bool, value: &T, text: String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).unwrap());
    } else {
        println!("{text}");
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Ingest(args) => {
            let source = if let Some(root) = args.dresden {
                IngestSource::Dresden {
                    root,
                    min_images: args.min_images,
                }
            } else if args.synthetic {
                cfg.input_size = (args.image_size, args.image_size);
                IngestSource::Synthetic(SynthConfig {
                    n_devices: args.devices,
                    images_per_device: args.per_device,
                    image_size: (args.image_size, args.image_size),
                    prnu_strength: args.prnu,
                    fpn_strength: args.fpn,
                    shot_noise_scale: args.shot,
                    scene_pool: args.scene_pool,
                    seed: 0,
                })
            } else {
                return Err(Error::InvalidConfig(
                    "ingest needs --dresden ROOT or --synthetic".into(),
                ));
            };
            let summary = pipeline::run_ingest(&cfg, &source, args.train_frac, args.val_frac)?;
            emit(
                cli.json,
                &summary,
                format!(
                    "{} devices, {} images ({} skipped) -> train {} / val {} / test {}\nmanifest: {}",
                    summary.devices,
                    summary.records,
                    summary.skipped,
                    summary.train,
                    summary.val,
                    summary.test,
                    summary.manifest_path.display()
                ),
            );
        }
        Command::Train(args) => {
            if let Some(size) = args.input_size {
                cfg.input_size = (size, size);
            }
            match args.phase {
                1 => {
                    if let Some(e) = args.epochs {
                        cfg.phase1.epochs = e;
                    }
                    if let Some(s) = args.stop_epoch {
                        cfg.phase1.stop_epoch = s;
                    }
                    if let Some(b) = args.batch_size {
                        cfg.phase1.batch_size = b;
                    }
                    if let Some(lr) = args.learning_rate {
                        cfg.phase1.learning_rate = lr;
                    }
                    let summary = pipeline::run_phase1(&cfg, cli.force)?;
                    emit(
                        cli.json,
                        &summary,
                        format!(
                            "phase 1 done: {} epochs, snapshot at epoch {} (val acc {:.3})\nextractor {}",
                            summary.epochs,
                            summary.stop_epoch,
                            summary.stop_val_acc,
                            &summary.extractor_version[..12]
                        ),
                    );
                }
                2 => {
                    if let Some(e) = args.epochs {
                        cfg.phase2.epochs = e;
                    }
                    if let Some(b) = args.batch_size {
                        cfg.phase2.batch_size = b;
                    }
                    if let Some(lr) = args.learning_rate {
                        cfg.phase2.learning_rate = lr;
                    }
                    if let Some(mode) = &args.pair_sampling {
                        cfg.phase2.pair_sampling = match mode.as_str() {
                            "all" => PairSampling::All,
                            "balanced" => PairSampling::Balanced,
                            other => {
                                return Err(Error::InvalidConfig(format!(
                                    "unknown pair sampling {other}; use all or balanced"
                                )))
                            }
                        };
                    }
                    let summary = pipeline::run_phase2(&cfg, cli.force)?;
                    emit(
                        cli.json,
                        &summary,
                        format!(
                            "phase 2 done: {} pairs ({} train / {} val), val F1 {}\nthreshold eta = {} (selection F1 {:.3})",
                            summary.pairs,
                            summary.train_pairs,
                            summary.val_pairs,
                            summary
                                .final_val_f1
                                .map(|v| format!("{v:.3}"))
                                .unwrap_or_else(|| "n/a".into()),
                            summary.eta,
                            summary.selection_f1
                        ),
                    );
                }
                _ => unreachable!("clap range"),
            }
        }
        Command::Extract => {
            let summary = pipeline::run_extract(&cfg, cli.force)?;
            emit(
                cli.json,
                &summary,
                format!(
                    "stored {} signatures ({} already present) under extractor {}",
                    summary.stored,
                    summary.reused,
                    &summary.extractor_version[..12]
                ),
            );
        }
        Command::Match { image_a, image_b } => {
            let result = pipeline::run_match(&cfg, &image_a, &image_b)?;
            emit(
                cli.json,
                &result,
                format!(
                    "score {:.6} (eta {}) -> {}",
                    result.score,
                    result.eta,
                    if result.same_device { "SAME" } else { "DIFFERENT" }
                ),
            );
        }
        Command::Evaluate(args) => {
            if let Some(n) = args.n_pairs {
                cfg.eval.n_pairs_per_cell = n;
            }
            if let Some(floor) = args.min_accuracy {
                cfg.eval.min_accuracy = Some(floor);
            }
            let report = pipeline::run_evaluate(&cfg)?;
            emit(
                cli.json,
                &report,
                format!(
                    "{}x{} similarity matrix, overall accuracy {:.4}\nartifacts under {}",
                    report.matrix.devices.len(),
                    report.matrix.devices.len(),
                    report.overall_accuracy,
                    cfg.eval_dir().display()
                ),
            );
            if let Some(floor) = cfg.eval.min_accuracy {
                if report.overall_accuracy < floor {
                    eprintln!(
                        "overall accuracy {:.4} below the required floor {floor}",
                        report.overall_accuracy
                    );
                    return Ok(ExitCode::from(2));
                }
            }
        }
        Command::Plot => {
            let path = pipeline::run_plot(&cfg)?;
            println!("heatmap written to {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
