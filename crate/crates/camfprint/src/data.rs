//! Image manifests: directory ingestion, device filtering and the
//! stratified train/val/test split.
//!
//! Filenames follow the `Model_InstanceIndex_ImageIndex.ext` convention,
//! e.g. `Nikon_D200_1_12345.JPG` belongs to device `Nikon_D200_1` of model
//! `Nikon_D200`. The instance index distinguishes physical units of the
//! same product line; matching happens at the device level.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

/// One image file plus its device identity and split assignment.
///
/// Field order is part of the manifest file format; do not reorder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: String,
    pub device_id: String,
    pub model_id: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
}

/// Field order is part of the manifest file format; do not reorder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub devices: Vec<String>,
    pub records: Vec<ImageRecord>,
}

/// Splits a device id into (model id, instance index).
///
/// `Nikon_D200_1` -> (`Nikon_D200`, 1). Returns None when the trailing
/// component is not a non-negative integer.
pub fn parse_device_id(device_id: &str) -> Option<(String, u32)> {
    let (model, idx) = device_id.rsplit_once('_')?;
    if model.is_empty() {
        return None;
    }
    let instance: u32 = idx.parse().ok()?;
    Some((model.to_string(), instance))
}

/// Parses a filename stem into (device_id, model_id).
///
/// The last underscore component is the per-device image counter, the one
/// before it is the device instance index; both must be integers.
fn parse_stem(stem: &str) -> Option<(String, String)> {
    let (device_part, image_idx) = stem.rsplit_once('_')?;
    image_idx.parse::<u64>().ok()?;
    let (model, instance) = device_part.rsplit_once('_')?;
    if model.is_empty() {
        return None;
    }
    instance.parse::<u32>().ok()?;
    Some((device_part.to_string(), model.to_string()))
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("jpg" | "jpeg" | "png")
    )
}

/// Builds a manifest from a directory tree of convention-named image files.
///
/// Files whose name does not parse or whose header cannot be decoded are
/// skipped and tallied in `skipped`; an empty result is an error.
pub fn build_manifest(root: &Path) -> Result<(Manifest, usize)> {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            Error::io(root, e.into_io_error().unwrap_or_else(|| {
                std::io::Error::new(std::io::ErrorKind::Other, "walkdir loop")
            }))
        })?;
        if !entry.file_type().is_file() || !is_image_file(entry.path()) {
            continue;
        }
        let stem = match entry.path().file_stem().and_then(|s| s.to_str()) {
            Some(s) => s,
            None => {
                skipped += 1;
                continue;
            }
        };
        let (device_id, model_id) = match parse_stem(stem) {
            Some(ids) => ids,
            None => {
                skipped += 1;
                continue;
            }
        };
        let (width, height) = match image::image_dimensions(entry.path()) {
            Ok(dims) => dims,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        records.push(ImageRecord {
            path: entry.path().to_string_lossy().into_owned(),
            device_id,
            model_id,
            width,
            height,
            split: Split::Unassigned,
        });
    }
    if records.is_empty() {
        return Err(Error::NoImagesFound(root.to_path_buf()));
    }
    records.sort_by(|a, b| a.path.cmp(&b.path));
    let devices = device_list_from_records(&records);
    Ok((
        Manifest {
            seed: 0,
            devices,
            records,
        },
        skipped,
    ))
}

/// Sorted, deduplicated device ids appearing in `records`.
pub fn device_list_from_records(records: &[ImageRecord]) -> Vec<String> {
    let mut devices: Vec<String> = records.iter().map(|r| r.device_id.clone()).collect();
    devices.sort();
    devices.dedup();
    devices
}

/// Removes devices with fewer than `min_count` records.
pub fn filter_min_images(m: &Manifest, min_count: usize) -> Result<Manifest> {
    if min_count < 2 {
        return Err(Error::InvalidConfig(format!(
            "min_count must be at least 2, got {min_count}"
        )));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &m.records {
        *counts.entry(r.device_id.as_str()).or_default() += 1;
    }
    let records: Vec<ImageRecord> = m
        .records
        .iter()
        .filter(|r| counts[r.device_id.as_str()] >= min_count)
        .cloned()
        .collect();
    let devices = device_list_from_records(&records);
    if devices.len() < 2 {
        return Err(Error::InsufficientDevices {
            found: devices.len(),
            need: 2,
        });
    }
    Ok(Manifest {
        seed: m.seed,
        devices,
        records,
    })
}

/// Assigns every record to train, val or test, stratified per device.
///
/// Per device, `ceil(train_frac * n)` records form the train+val pool and
/// the rest go to test; the pool is clamped so both sides keep at least one
/// record. `val_frac` of the pool (rounded down, keeping at least one train
/// record) becomes the validation set. Deterministic: per-device shuffle
/// seeds are derived from `seed` and the device id, so the assignment does
/// not depend on record or device processing order.
pub fn stratified_split(
    m: &Manifest,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<Manifest> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_frac must be in (0,1), got {train_frac}"
        )));
    }
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::InvalidConfig(format!(
            "val_frac must be in [0,1), got {val_frac}"
        )));
    }
    let mut out = m.clone();
    out.seed = seed;
    let mut by_device: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, r) in m.records.iter().enumerate() {
        by_device.entry(r.device_id.as_str()).or_default().push(idx);
    }
    for (device, mut indices) in by_device {
        let n = indices.len();
        if n < 2 {
            return Err(Error::DeviceTooSmall {
                device: device.to_string(),
                count: n,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &format!("split:{device}")));
        indices.shuffle(&mut rng);
        // ceil(train_frac * n), clamped so neither side is empty
        let pool = ((train_frac * n as f64).ceil() as usize).clamp(1, n - 1);
        let n_val = ((val_frac * pool as f64).floor() as usize).min(pool - 1);
        for (k, &idx) in indices.iter().enumerate() {
            out.records[idx].split = if k < pool - n_val {
                Split::Train
            } else if k < pool {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

impl Manifest {
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Index of a device in the sorted device list; used as the class label.
    pub fn device_index(&self, device_id: &str) -> Option<usize> {
        self.devices.binary_search_by(|d| d.as_str().cmp(device_id)).ok()
    }

    pub fn device_count(&self, device_id: &str) -> usize {
        self.records
            .iter()
            .filter(|r| r.device_id == device_id)
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
