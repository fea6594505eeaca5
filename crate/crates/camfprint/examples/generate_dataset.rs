//! Generate a synthetic multi-device dataset and demonstrate that the
//! injected per-device fingerprint survives frame averaging while shot
//! noise does not.
//!
//!     cargo run --release --example generate_dataset [OUTPUT_DIR]

use camfprint::data::stratified_split;
use camfprint::synth::{device_noise_fields, expected_frame, generate_synthetic, SynthConfig};

fn main() -> Result<(), camfprint::Error> {
    let out: std::path::PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "camfprint-out/dataset-demo".to_string())
        .into();

    let cfg = SynthConfig {
        n_devices: 4,
        images_per_device: 60,
        image_size: (32, 32),
        scene_pool: 1,
        seed: 7,
        ..Default::default()
    };
    let manifest = generate_synthetic(&cfg, &out)?;
    println!(
        "wrote {} images for {} devices under {}",
        manifest.records.len(),
        manifest.devices.len(),
        out.display()
    );

    // average all frames of device 0 (single shared scene)
    let device = &manifest.devices[0];
    let mut acc = vec![0.0f64; 3 * 32 * 32];
    let mut count = 0.0;
    for rec in manifest.records.iter().filter(|r| &r.device_id == device) {
        let img = image::open(&rec.path).unwrap().to_rgb8();
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                acc[c * 32 * 32 + i] += px[c] as f64 / 255.0;
            }
        }
        count += 1.0;
    }
    let expected = expected_frame(&cfg, 0, 0);
    let mut err = 0.0;
    for (i, v) in acc.iter().enumerate() {
        err += (v / count - expected.as_slice().unwrap()[i]).abs();
    }
    println!(
        "frame-average vs noise-free expectation: mean abs error {:.5} over {} frames",
        err / acc.len() as f64,
        count
    );

    let (prnu, fpn) = device_noise_fields(&cfg, 0);
    println!(
        "device {} ground-truth fields: prnu std {:.4}, fpn std {:.4}",
        device,
        (prnu.mapv(|v| v * v).mean().unwrap()).sqrt(),
        (fpn.mapv(|v| v * v).mean().unwrap()).sqrt()
    );

    let split = stratified_split(&manifest, 0.7, 0.15, 42)?;
    split.save(&out.join("manifest.json"))?;
    println!("manifest with 70/15/30 split: {}", out.join("manifest.json").display());
    Ok(())
}
