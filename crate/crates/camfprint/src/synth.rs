//! Synthetic camera dataset generator.
//!
//! Each device owns two fixed per-pixel noise fields: a multiplicative
//! sensitivity field (pixel non-uniformity, survives frame averaging) and an
//! additive dark-current offset field (fixed pattern noise). Every image adds
//! fresh per-frame shot noise on top:
//!
//! ```text
//! I = clip(scene * (1 + K_d) + D_d + eps, 0, 1)
//! ```
//!
//! Scenes come from a shared pool assigned round-robin, so image content
//! carries no device information; only the noise fields separate devices.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{device_list_from_records, ImageRecord, Manifest, Split};
use crate::error::{Error, Result};
use crate::util::mix_seed_n;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_devices: usize,
    pub images_per_device: usize,
    /// (height, width) in pixels.
    pub image_size: (usize, usize),
    /// Std of the multiplicative sensitivity field.
    pub prnu_strength: f64,
    /// Std of the additive offset field, in [0,1] intensity units.
    pub fpn_strength: f64,
    /// Std of per-frame noise, in [0,1] intensity units.
    pub shot_noise_scale: f64,
    /// Number of distinct scenes shared by all devices.
    pub scene_pool: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_devices: 8,
            images_per_device: 40,
            image_size: (64, 64),
            prnu_strength: 0.10,
            fpn_strength: 0.03,
            shot_noise_scale: 0.01,
            scene_pool: 5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_devices < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_devices must be at least 2, got {}",
                self.n_devices
            )));
        }
        if self.images_per_device < 2 {
            return Err(Error::InvalidConfig(format!(
                "images_per_device must be at least 2, got {}",
                self.images_per_device
            )));
        }
        if self.scene_pool == 0 {
            return Err(Error::InvalidConfig("scene_pool must be nonzero".into()));
        }
        if self.image_size.0 == 0 || self.image_size.1 == 0 {
            return Err(Error::InvalidConfig("image_size must be nonzero".into()));
        }
        for (name, v) in [
            ("prnu_strength", self.prnu_strength),
            ("fpn_strength", self.fpn_strength),
            ("shot_noise_scale", self.shot_noise_scale),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Device id for synthetic device `i`: two instances per model, so the
/// same-model confusion diagnostics have something to group.
pub fn synth_device_id(i: usize) -> String {
    let model_idx = i / 2;
    let model = if model_idx < 26 {
        format!("Cam{}", (b'A' + model_idx as u8) as char)
    } else {
        format!("Cam{model_idx}")
    };
    format!("{model}_{}", i % 2)
}

/// The shared scene `idx`, an RGB field of smooth low-frequency content in
/// roughly [0.2, 0.8]. Pure function of (cfg.seed, idx).
pub fn scene_field(cfg: &SynthConfig, idx: usize) -> Array3<f64> {
    let (h, w) = cfg.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(cfg.seed, "synth:scene", idx as u64));
    let mut out = Array3::<f64>::zeros((3, h, w));
    for c in 0..3 {
        // sum of a few random plane waves, then squashed into [0.2, 0.8]
        let n_waves = 4;
        let params: Vec<(f64, f64, f64, f64)> = (0..n_waves)
            .map(|_| {
                (
                    rng.gen_range(0.5..4.0),                      // fx cycles
                    rng.gen_range(0.5..4.0),                      // fy cycles
                    rng.gen_range(0.0..std::f64::consts::TAU),    // phase
                    rng.gen_range(0.3..1.0),                      // amplitude
                )
            })
            .collect();
        for y in 0..h {
            for x in 0..w {
                let mut v = 0.0;
                for &(fx, fy, phase, amp) in &params {
                    let arg = std::f64::consts::TAU
                        * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64)
                        + phase;
                    v += amp * arg.sin();
                }
                out[[c, y, x]] = 0.5 + 0.35 * (v / 2.0).tanh();
            }
        }
    }
    out
}

/// Separable box blur with device-specific radius; 0 leaves the field
/// white. Wraps at the edges so variance stays uniform.
fn smooth(field: &Array2<f64>, radius: usize) -> Array2<f64> {
    if radius == 0 {
        return field.clone();
    }
    let (h, w) = field.dim();
    let span = (2 * radius + 1) as f64;
    let mut rows = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in 0..=2 * radius {
                let sx = (x + w + d - radius) % w;
                acc += field[[y, sx]];
            }
            rows[[y, x]] = acc / span;
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for d in 0..=2 * radius {
                let sy = (y + h + d - radius) % h;
                acc += rows[[sy, x]];
            }
            out[[y, x]] = acc / span;
        }
    }
    out
}

fn normalize_to_unit_std(field: &mut Array2<f64>) {
    let n = field.len() as f64;
    let mean = field.sum() / n;
    let var = field.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        let istd = 1.0 / var.sqrt();
        field.mapv_inplace(|v| (v - mean) * istd);
    }
}

/// Ground-truth noise fields (K_d, D_d) for device `i`, zero-mean with
/// std equal to the configured strengths.
///
/// Each field mixes a white component (wafer-level pixel non-uniformity)
/// with a spatially smoothed component (per-unit optical contributions:
/// dust, coating, vignetting residue) at a device-specific ratio, so
/// physical units differ both in the exact field realization and in its
/// texture. Pure function of (cfg.seed, i); exposed so tests and
/// diagnostics can compare estimated fingerprints against the truth.
pub fn device_noise_fields(cfg: &SynthConfig, i: usize) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = cfg.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(cfg.seed, "synth:device", i as u64));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut draw = |strength: f64| {
        let alpha = rng.gen_range(0.1..0.9);
        let mut white = Array2::<f64>::zeros((h, w));
        for v in white.iter_mut() {
            *v = normal.sample(&mut rng);
        }
        let mut low = smooth(&white, 2);
        normalize_to_unit_std(&mut low);
        let mut field = Array2::from_shape_fn((h, w), |idx| {
            alpha * white[idx] + (1.0 - alpha) * low[idx]
        });
        normalize_to_unit_std(&mut field);
        field.mapv_inplace(|v| v * strength);
        field
    };
    let prnu = draw(cfg.prnu_strength);
    let fpn = draw(cfg.fpn_strength);
    (prnu, fpn)
}

/// The noise-free expectation `clip(scene * (1 + K_d) + D_d)` for a device
/// and scene; what frame averaging converges to as shot noise cancels.
pub fn expected_frame(cfg: &SynthConfig, device: usize, scene_idx: usize) -> Array3<f64> {
    let scene = scene_field(cfg, scene_idx);
    let (prnu, fpn) = device_noise_fields(cfg, device);
    let (h, w) = cfg.image_size;
    let mut out = Array3::<f64>::zeros((3, h, w));
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                out[[c, y, x]] =
                    (scene[[c, y, x]] * (1.0 + prnu[[y, x]]) + fpn[[y, x]]).clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Generates the dataset under `out_dir` and returns its manifest.
///
/// Image `k` of device `d` uses scene `k % scene_pool` and a per-image shot
/// noise stream seeded from (seed, d, k), so output is identical no matter
/// how generation work is ordered or divided.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (h, w) = cfg.image_size;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut records = Vec::with_capacity(cfg.n_devices * cfg.images_per_device);
    let mut scenes = Vec::with_capacity(cfg.scene_pool);
    for s in 0..cfg.scene_pool {
        scenes.push(scene_field(cfg, s));
    }
    for d in 0..cfg.n_devices {
        let device_id = synth_device_id(d);
        let model_id = device_id.rsplit_once('_').unwrap().0.to_string();
        let (prnu, fpn) = device_noise_fields(cfg, d);
        for k in 0..cfg.images_per_device {
            let scene = &scenes[k % cfg.scene_pool];
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(
                cfg.seed,
                &format!("synth:image:{d}"),
                k as u64,
            ));
            let mut img = image::RgbImage::new(w as u32, h as u32);
            for y in 0..h {
                for x in 0..w {
                    let mut px = [0u8; 3];
                    for c in 0..3 {
                        let eps = normal.sample(&mut rng) * cfg.shot_noise_scale;
                        let v = (scene[[c, y, x]] * (1.0 + prnu[[y, x]]) + fpn[[y, x]] + eps)
                            .clamp(0.0, 1.0);
                        px[c] = (v * 255.0).round() as u8;
                    }
                    img.put_pixel(x as u32, y as u32, image::Rgb(px));
                }
            }
            let filename = format!("{device_id}_{k:04}.png");
            let path = out_dir.join(&filename);
            img.save(&path).map_err(|e| Error::image(&path, e))?;
            records.push(ImageRecord {
                path: path.to_string_lossy().into_owned(),
                device_id: device_id.clone(),
                model_id: model_id.clone(),
                width: w as u32,
                height: h as u32,
                split: Split::Unassigned,
            });
        }
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    let devices = device_list_from_records(&records);
    Ok(Manifest {
        seed: cfg.seed,
        devices,
        records,
    })
}
