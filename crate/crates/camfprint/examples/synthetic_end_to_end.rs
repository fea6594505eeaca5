//! Full pipeline on generated data: synthesize an 8-device dataset whose
//! devices differ only in sensor noise, train both phases, pick the
//! threshold, and evaluate the 8x8 similarity matrix.
//!
//!     cargo run --release --example synthetic_end_to_end [OUTPUT_DIR]

use std::time::Instant;

use camfprint::pipeline::{self, ExperimentConfig, IngestSource};
use camfprint::similarity::PairSampling;
use camfprint::synth::SynthConfig;

fn main() -> Result<(), camfprint::Error> {
    let output_dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "camfprint-out/synthetic-demo".to_string());
    let cfg = ExperimentConfig {
        input_size: (64, 64),
        output_dir: output_dir.into(),
        seed: 42,
        phase1: camfprint::Phase1Config {
            epochs: 12,
            stop_epoch: 12,
            learning_rate: 0.01,
            batch_size: 16,
            ..Default::default()
        },
        phase2: camfprint::Phase2Config {
            epochs: 12,
            batch_size: 128,
            pair_sampling: PairSampling::Balanced,
            ..Default::default()
        },
        ..Default::default()
    };

    let t = Instant::now();
    let synth = SynthConfig {
        n_devices: 8,
        images_per_device: 40,
        image_size: (64, 64),
        ..Default::default()
    };
    let ingest = pipeline::run_ingest(&cfg, &IngestSource::Synthetic(synth), 0.70, 0.15)?;
    println!(
        "[{:6.1?}] ingest: {} devices, {} images (train {} / val {} / test {})",
        t.elapsed(),
        ingest.devices,
        ingest.records,
        ingest.train,
        ingest.val,
        ingest.test
    );

    let p1 = pipeline::run_phase1(&cfg, true)?;
    println!(
        "[{:6.1?}] phase 1: snapshot at epoch {} with val acc {:.3}",
        t.elapsed(),
        p1.stop_epoch,
        p1.stop_val_acc
    );

    let ex = pipeline::run_extract(&cfg, false)?;
    println!("[{:6.1?}] extracted {} signatures", t.elapsed(), ex.stored);

    let p2 = pipeline::run_phase2(&cfg, true)?;
    println!(
        "[{:6.1?}] phase 2: {} pairs, val F1 {:?}, eta {} (F1 {:.3})",
        t.elapsed(),
        p2.pairs,
        p2.final_val_f1,
        p2.eta,
        p2.selection_f1
    );

    let report = pipeline::run_evaluate(&cfg)?;
    let n = report.matrix.devices.len();
    let diag_mean: f64 =
        (0..n).map(|i| report.matrix.cells[i][i]).sum::<f64>() / n as f64;
    println!(
        "[{:6.1?}] evaluate: overall accuracy {:.4}, diagonal mean {:.4}",
        t.elapsed(),
        report.overall_accuracy,
        diag_mean
    );
    for c in report.worst_confusions.iter().take(3) {
        println!("         confusion {} vs {}: {:.2}", c.device_i, c.device_j, c.cell);
    }
    println!("artifacts: {}", cfg.eval_dir().display());
    Ok(())
}
