//! Phase I in isolation: train the device-classification CNN on a small
//! synthetic set, snapshot at the configured stop epoch, and inspect the
//! per-epoch log.
//!
//!     cargo run --release --example train_signature_net [OUTPUT_DIR]

use camfprint::pipeline::{self, ExperimentConfig, IngestSource};
use camfprint::synth::SynthConfig;
use camfprint::{Error, Phase1Config};

fn main() -> Result<(), Error> {
    let output_dir: std::path::PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "camfprint-out/quickstart".to_string())
        .into();
    let cfg = ExperimentConfig {
        input_size: (48, 48),
        output_dir,
        seed: 42,
        phase1: Phase1Config {
            epochs: 8,
            stop_epoch: 8,
            learning_rate: 0.01,
            batch_size: 16,
            ..Default::default()
        },
        ..Default::default()
    };

    if !cfg.manifest_file().exists() {
        let synth = SynthConfig {
            n_devices: 6,
            images_per_device: 24,
            image_size: (48, 48),
            ..Default::default()
        };
        let s = pipeline::run_ingest(&cfg, &IngestSource::Synthetic(synth), 0.70, 0.15)?;
        println!("ingested {} images over {} devices", s.records, s.devices);
    }

    match pipeline::run_phase1(&cfg, false) {
        Ok(summary) => {
            println!(
                "trained {} epochs; snapshot at epoch {} (val acc {:.3})",
                summary.epochs, summary.stop_epoch, summary.stop_val_acc
            );
            println!("extractor version {}", &summary.extractor_version[..16]);
        }
        Err(Error::WouldRecompute(path)) => {
            println!("checkpoint {} already present; reusing", path.display());
        }
        Err(e) => return Err(e),
    }

    for line in std::fs::read_to_string(cfg.phase1_log()).unwrap().lines() {
        println!("log: {line}");
    }
    Ok(())
}
