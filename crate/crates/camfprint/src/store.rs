//! Single-file signature database.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! header:  magic "SIGS" | version: u32 | count: u64
//! records: count x {
//!     sig_id: u64
//!     extractor hash: 32 bytes
//!     device_id: 64 bytes, zero-padded UTF-8
//!     path_offset: u64  (into the string table)
//!     path_len: u32
//!     values: 1024 x f32
//! }
//! string table: concatenated path bytes
//! ```
//!
//! Writes go through a temp file and an atomic rename, so a concurrent
//! reader sees either the previous complete store or the new one, never a
//! torn record.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signature::{Signature, SIGNATURE_DIM};
use crate::util::VersionHash;

const MAGIC: &[u8; 4] = b"SIGS";
const FORMAT_VERSION: u32 = 1;
const DEVICE_FIELD: usize = 64;
const RECORD_SIZE: usize = 8 + 32 + DEVICE_FIELD + 8 + 4 + SIGNATURE_DIM * 4;

#[derive(Debug, Clone)]
pub struct StoreRecord {
    pub sig_id: u64,
    pub image_path: String,
    pub device_id: String,
    pub version: VersionHash,
    pub values: Vec<f32>,
}

#[derive(Debug, Default)]
pub struct SignatureStore {
    records: Vec<StoreRecord>,
    // (image_path, extractor_version) -> index into records
    index: HashMap<(String, VersionHash), usize>,
}

impl SignatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Inserts a signature, assigning the next sig_id. Re-putting an
    /// identical record is a no-op returning the existing id; the same key
    /// with different payload is a conflict (the extractor is supposed to
    /// be deterministic).
    pub fn put(&mut self, sig: &Signature) -> Result<u64> {
        if sig.values.len() != SIGNATURE_DIM {
            return Err(Error::BadSignatureLength(sig.values.len()));
        }
        if sig.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Other(format!(
                "signature for {} contains non-finite values",
                sig.image_path
            )));
        }
        if sig.device_id.len() > DEVICE_FIELD {
            return Err(Error::Other(format!(
                "device_id {} exceeds the {DEVICE_FIELD}-byte store field",
                sig.device_id
            )));
        }
        let key = (sig.image_path.clone(), sig.version);
        if let Some(&at) = self.index.get(&key) {
            let existing = &self.records[at];
            let same = existing.device_id == sig.device_id
                && existing
                    .values
                    .iter()
                    .zip(&sig.values)
                    .all(|(a, b)| a.to_bits() == b.to_bits());
            return if same {
                Ok(existing.sig_id)
            } else {
                Err(Error::StoreConflict {
                    path: sig.image_path.clone(),
                })
            };
        }
        let sig_id = self.records.len() as u64;
        self.records.push(StoreRecord {
            sig_id,
            image_path: sig.image_path.clone(),
            device_id: sig.device_id.clone(),
            version: sig.version,
            values: sig.values.clone(),
        });
        self.index.insert(key, self.records.len() - 1);
        Ok(sig_id)
    }

    pub fn get(&self, sig_id: u64) -> Option<&StoreRecord> {
        self.records.get(sig_id as usize).filter(|r| r.sig_id == sig_id)
    }

    pub fn get_by_path(&self, image_path: &str, version: VersionHash) -> Option<&StoreRecord> {
        self.index
            .get(&(image_path.to_string(), version))
            .map(|&i| &self.records[i])
    }

    /// All records of one device under one extractor version, ordered by
    /// sig_id. Unknown devices yield an empty list.
    pub fn get_by_device(&self, device_id: &str, version: VersionHash) -> Vec<&StoreRecord> {
        self.records
            .iter()
            .filter(|r| r.device_id == device_id && r.version == version)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoreRecord> {
        self.records.iter()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut table = Vec::new();
        let mut buf = Vec::with_capacity(16 + self.records.len() * RECORD_SIZE);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            buf.extend_from_slice(&r.sig_id.to_le_bytes());
            buf.extend_from_slice(&r.version.0);
            let mut device = [0u8; DEVICE_FIELD];
            device[..r.device_id.len()].copy_from_slice(r.device_id.as_bytes());
            buf.extend_from_slice(&device);
            buf.extend_from_slice(&(table.len() as u64).to_le_bytes());
            buf.extend_from_slice(&(r.image_path.len() as u32).to_le_bytes());
            table.extend_from_slice(r.image_path.as_bytes());
            for v in &r.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf.extend_from_slice(&table);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: &str| Error::StoreCorrupt {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("missing SIGS header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported format version {version}")));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let table_start = 16 + count * RECORD_SIZE;
        if bytes.len() < table_start {
            return Err(corrupt("truncated record section"));
        }
        let table = &bytes[table_start..];
        let mut store = SignatureStore::new();
        for i in 0..count {
            let rec = &bytes[16 + i * RECORD_SIZE..16 + (i + 1) * RECORD_SIZE];
            let sig_id = u64::from_le_bytes(rec[..8].try_into().unwrap());
            let version = VersionHash(rec[8..40].try_into().unwrap());
            let device_raw = &rec[40..40 + DEVICE_FIELD];
            let device_end = device_raw
                .iter()
                .position(|&b| b == 0)
                .unwrap_or(DEVICE_FIELD);
            let device_id = std::str::from_utf8(&device_raw[..device_end])
                .map_err(|_| corrupt("device_id is not UTF-8"))?
                .to_string();
            let off = 40 + DEVICE_FIELD;
            let path_offset =
                u64::from_le_bytes(rec[off..off + 8].try_into().unwrap()) as usize;
            let path_len =
                u32::from_le_bytes(rec[off + 8..off + 12].try_into().unwrap()) as usize;
            if path_offset + path_len > table.len() {
                return Err(corrupt("path reference outside the string table"));
            }
            let image_path = std::str::from_utf8(&table[path_offset..path_offset + path_len])
                .map_err(|_| corrupt("path is not UTF-8"))?
                .to_string();
            let mut values = Vec::with_capacity(SIGNATURE_DIM);
            let vals = &rec[off + 12..];
            for chunk in vals.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            store.index.insert((image_path.clone(), version), i);
            store.records.push(StoreRecord {
                sig_id,
                image_path,
                device_id,
                version,
                values,
            });
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(path: &str, device: &str, version: u8, scale: f32) -> Signature {
        Signature {
            values: (0..SIGNATURE_DIM)
                .map(|i| ((i as f32 * 0.37).sin() * scale).clamp(-1.0, 1.0))
                .collect(),
            image_path: path.to_string(),
            device_id: device.to_string(),
            version: VersionHash([version; 32]),
        }
    }

    #[test]
    fn put_get_round_trips_bit_for_bit() {
        let mut store = SignatureStore::new();
        let s = sig("a.png", "CamA_0", 1, 0.9);
        let id = store.put(&s).unwrap();
        let back = store.get(id).unwrap();
        assert_eq!(back.values.len(), SIGNATURE_DIM);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reput_is_idempotent_and_conflicts_are_caught() {
        let mut store = SignatureStore::new();
        let s = sig("a.png", "CamA_0", 1, 0.9);
        let id1 = store.put(&s).unwrap();
        let id2 = store.put(&s).unwrap();
        assert_eq!(id1, id2);
        assert_eq!(store.len(), 1);
        let mut altered = s.clone();
        altered.values[5] += 0.25;
        assert!(matches!(
            store.put(&altered),
            Err(Error::StoreConflict { .. })
        ));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let mut store = SignatureStore::new();
        let mut s = sig("a.png", "CamA_0", 1, 0.9);
        s.values.pop();
        assert!(matches!(
            store.put(&s),
            Err(Error::BadSignatureLength(1023))
        ));
    }

    #[test]
    fn versions_never_mix() {
        let mut store = SignatureStore::new();
        store.put(&sig("a.png", "CamA_0", 1, 0.5)).unwrap();
        store.put(&sig("a.png", "CamA_0", 2, 0.7)).unwrap(); // same path, other extractor
        store.put(&sig("b.png", "CamA_0", 1, 0.6)).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.get_by_device("CamA_0", VersionHash([1; 32])).len(), 2);
        assert_eq!(store.get_by_device("CamA_0", VersionHash([2; 32])).len(), 1);
        assert!(store.get_by_device("CamZ_9", VersionHash([1; 32])).is_empty());
    }

    #[test]
    fn file_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigs.store");
        let mut store = SignatureStore::new();
        for i in 0..20 {
            store
                .put(&sig(
                    &format!("img_{i:03}.png"),
                    &format!("Cam{}_0", (b'A' + (i % 3) as u8) as char),
                    1,
                    0.1 + i as f32 * 0.04,
                ))
                .unwrap();
        }
        store.save(&path).unwrap();
        let loaded = SignatureStore::load(&path).unwrap();
        assert_eq!(loaded.len(), store.len());
        for (a, b) in loaded.iter().zip(store.iter()) {
            assert_eq!(a.sig_id, b.sig_id);
            assert_eq!(a.image_path, b.image_path);
            assert_eq!(a.device_id, b.device_id);
            assert_eq!(a.version, b.version);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // stable order by sig_id within a device query
        let recs = loaded.get_by_device("CamA_0", VersionHash([1; 32]));
        assert!(recs.windows(2).all(|w| w[0].sig_id < w[1].sig_id));
    }

    #[test]
    fn header_layout_is_as_documented() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigs.store");
        let mut store = SignatureStore::new();
        store.put(&sig("xy.png", "CamA_0", 3, 0.5)).unwrap();
        store.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SIGS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 16 + RECORD_SIZE + "xy.png".len());
        // device field zero-padded at its documented offset
        assert_eq!(&bytes[16 + 40..16 + 40 + 6], b"CamA_0");
        assert!(bytes[16 + 40 + 6..16 + 40 + DEVICE_FIELD].iter().all(|&b| b == 0));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sigs.store");
        std::fs::write(&path, b"BOGUS").unwrap();
        assert!(matches!(
            SignatureStore::load(&path),
            Err(Error::StoreCorrupt { .. })
        ));
    }
}
