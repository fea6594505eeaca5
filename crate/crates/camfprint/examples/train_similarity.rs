//! Phase II in isolation: generate labeled signature pairs, train the
//! Siamese similarity head, and pick the operating threshold by validation
//! F1. Run `train_signature_net` first (same output dir).
//!
//!     cargo run --release --example train_similarity [OUTPUT_DIR]

use camfprint::pipeline::{self, ExperimentConfig};
use camfprint::similarity::{read_pairs, PairSampling, ThresholdArtifact};
use camfprint::{Error, Phase2Config};

fn main() -> Result<(), Error> {
    let output_dir: std::path::PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "camfprint-out/quickstart".to_string())
        .into();
    let cfg = ExperimentConfig {
        output_dir,
        phase2: Phase2Config {
            epochs: 10,
            batch_size: 128,
            pair_sampling: PairSampling::Balanced,
            ..Default::default()
        },
        ..Default::default()
    };

    match pipeline::run_phase2(&cfg, false) {
        Ok(summary) => {
            println!(
                "trained on {} pairs ({} train / {} val-held-out)",
                summary.pairs, summary.train_pairs, summary.val_pairs
            );
            println!(
                "validation F1 {:?}; selected eta = {} (F1 {:.3})",
                summary.final_val_f1, summary.eta, summary.selection_f1
            );
        }
        Err(Error::WouldRecompute(path)) => {
            println!("checkpoint {} already present; reusing", path.display());
        }
        Err(e) => return Err(e),
    }

    let pairs = read_pairs(&cfg.pairs_file())?;
    let positives = pairs.iter().filter(|(_, _, l)| *l == 1).count();
    println!(
        "pair file: {} records ({} positive / {} negative)",
        pairs.len(),
        positives,
        pairs.len() - positives
    );

    let threshold = ThresholdArtifact::load(&cfg.threshold_file())?;
    println!(
        "threshold artifact: eta {} over a {}-point grid, extractor {}",
        threshold.eta,
        threshold.grid.len(),
        &threshold.extractor_version.to_hex()[..16]
    );
    Ok(())
}
