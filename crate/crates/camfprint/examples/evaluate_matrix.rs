//! Build the per-device-pair similarity matrix on the test split, report
//! overall accuracy and the same-model confusion diagnostics, and render
//! the heatmap. Run phases 1 and 2 first (same output dir).
//!
//!     cargo run --release --example evaluate_matrix [OUTPUT_DIR]

use camfprint::eval::same_model_report;
use camfprint::pipeline::{self, ExperimentConfig};

fn main() -> Result<(), camfprint::Error> {
    let output_dir: std::path::PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "camfprint-out/quickstart".to_string())
        .into();
    let cfg = ExperimentConfig {
        output_dir,
        ..Default::default()
    };

    let report = pipeline::run_evaluate(&cfg)?;
    let n = report.matrix.devices.len();
    println!("{n}x{n} matrix at eta {}", report.matrix.eta);
    println!("overall accuracy: {:.4}", report.overall_accuracy);
    let diag: f64 = (0..n).map(|i| report.matrix.cells[i][i]).sum::<f64>() / n as f64;
    println!("diagonal mean:    {diag:.4}");

    println!("worst confusions:");
    for c in report.worst_confusions.iter().take(5) {
        println!("  {} vs {} -> {:.2}", c.device_i, c.device_j, c.cell);
    }
    let sm = same_model_report(&report);
    println!(
        "same-model mean error {:?} vs cross-model {:?}",
        sm.same_model_mean_error, sm.cross_model_mean_error
    );
    println!(
        "report.json / matrix.csv / heatmap.png under {}",
        cfg.eval_dir().display()
    );
    Ok(())
}
