//! Score a pair of image files with the trained pipeline and print the
//! same-device verdict. Run phases 1 and 2 first (same output dir);
//! defaults to two images from the generated dataset.
//!
//!     cargo run --release --example match_images [OUTPUT_DIR [IMAGE_A IMAGE_B]]

use camfprint::pipeline::{self, ExperimentConfig};
use camfprint::{Manifest, Split};

fn main() -> Result<(), camfprint::Error> {
    let args: Vec<String> = std::env::args().collect();
    let output_dir: std::path::PathBuf = args
        .get(1)
        .cloned()
        .unwrap_or_else(|| "camfprint-out/quickstart".to_string())
        .into();
    let cfg = ExperimentConfig {
        output_dir,
        ..Default::default()
    };

    let (image_a, image_b) = if args.len() >= 4 {
        (args[2].clone(), args[3].clone())
    } else {
        // pick one same-device and report it; then one cross-device pair
        let manifest = Manifest::load(&cfg.manifest_file())?;
        let test: Vec<_> = manifest.records_in(Split::Test).collect();
        let same = test
            .iter()
            .find(|r| r.device_id == test[0].device_id && r.path != test[0].path)
            .expect("test split has same-device pairs");
        let other = test
            .iter()
            .find(|r| r.device_id != test[0].device_id)
            .expect("test split has cross-device pairs");
        let result = pipeline::run_match(
            &cfg,
            std::path::Path::new(&test[0].path),
            std::path::Path::new(&same.path),
        )?;
        println!(
            "same-device pair   [{} | {}]: score {:.4} -> {}",
            test[0].device_id,
            same.device_id,
            result.score,
            verdict(&result)
        );
        (test[0].path.clone(), other.path.clone())
    };

    let result = pipeline::run_match(
        &cfg,
        std::path::Path::new(&image_a),
        std::path::Path::new(&image_b),
    )?;
    println!(
        "queried pair       [{} | {}]: score {:.4} (eta {}) -> {}",
        image_a,
        image_b,
        result.score,
        result.eta,
        verdict(&result)
    );
    Ok(())
}

fn verdict(r: &camfprint::pipeline::MatchResult) -> &'static str {
    if r.same_device {
        "SAME"
    } else {
        "DIFFERENT"
    }
}
