//! Property tests for the data-handling invariants: things that must hold
//! for every manifest, signature set and score distribution, not just the
//! hand-picked cases.

use proptest::prelude::*;

use camfprint::data::{
    device_list_from_records, filter_min_images, stratified_split, ImageRecord, Manifest,
};
use camfprint::similarity::{best_threshold, f1_at, make_pairs, PairSampling};
use camfprint::store::SignatureStore;
use camfprint::{Signature, Split, VersionHash, SIGNATURE_DIM};

fn manifest_from_counts(counts: &[u8]) -> Manifest {
    let mut records = Vec::new();
    for (d, &n) in counts.iter().enumerate() {
        let device = format!("Cam{}_{}", (b'A' + (d / 2) as u8) as char, d % 2);
        let model = device.rsplit_once('_').unwrap().0.to_string();
        for k in 0..n {
            records.push(ImageRecord {
                path: format!("{device}_{k:04}.png"),
                device_id: device.clone(),
                model_id: model.clone(),
                width: 8,
                height: 8,
                split: Split::Unassigned,
            });
        }
    }
    let devices = device_list_from_records(&records);
    Manifest {
        seed: 0,
        devices,
        records,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_never_grows_and_never_leaves_small_devices(
        counts in prop::collection::vec(0u8..12, 2..8),
        min_count in 2usize..5,
    ) {
        let m = manifest_from_counts(&counts);
        prop_assume!(!m.records.is_empty());
        match filter_min_images(&m, min_count) {
            Ok(f) => {
                prop_assert!(f.records.len() <= m.records.len());
                for device in &f.devices {
                    prop_assert!(f.device_count(device) >= min_count);
                }
                // no record of a dropped device survives
                for r in &f.records {
                    prop_assert!(f.devices.contains(&r.device_id));
                }
            }
            Err(_) => {
                // legal only when fewer than two devices would remain
                let survivors = m
                    .devices
                    .iter()
                    .filter(|d| m.device_count(d) >= min_count)
                    .count();
                prop_assert!(survivors < 2);
            }
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic(
        counts in prop::collection::vec(2u8..40, 2..6),
        seed in any::<u64>(),
        frac in 0.2f64..0.9,
    ) {
        let m = manifest_from_counts(&counts);
        let a = stratified_split(&m, frac, 0.15, seed).unwrap();
        let b = stratified_split(&m, frac, 0.15, seed).unwrap();
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        for device in &a.devices {
            let n = a.device_count(device) as f64;
            let pool = a.records.iter()
                .filter(|r| &r.device_id == device && r.split != Split::Test)
                .count() as f64;
            let test = n - pool;
            prop_assert!(pool >= 1.0 && test >= 1.0, "both sides populated");
            prop_assert!((pool / n - frac).abs() <= 1.0 / n + 1e-9);
        }
    }

    #[test]
    fn pair_labels_always_replay_device_identity(
        device_of in prop::collection::vec(0usize..5, 2..30),
        seed in any::<u64>(),
        balanced in any::<bool>(),
    ) {
        let sigs: Vec<Signature> = device_of.iter().enumerate().map(|(k, &d)| Signature {
            values: vec![0.0; 8],
            image_path: format!("img{k}.png"),
            device_id: format!("Cam{d}_0"),
            version: VersionHash([9; 32]),
        }).collect();
        let mode = if balanced { PairSampling::Balanced } else { PairSampling::All };
        match make_pairs(&sigs, mode, seed) {
            Ok(pairs) => {
                for p in &pairs {
                    prop_assert_eq!(p.label, sigs[p.a].device_id == sigs[p.b].device_id);
                    prop_assert!(p.a < p.b);
                }
                if mode == PairSampling::All {
                    let n = sigs.len();
                    prop_assert_eq!(pairs.len(), n * (n - 1) / 2);
                }
            }
            Err(_) => {
                // only when no device occurs twice
                let mut sorted = device_of.clone();
                sorted.sort();
                let has_dup = sorted.windows(2).any(|w| w[0] == w[1]);
                prop_assert!(!has_dup);
            }
        }
    }

    #[test]
    fn store_round_trips_arbitrary_finite_payloads(
        base in prop::collection::vec(-1.0f32..1.0, 8),
        n in 1usize..20,
    ) {
        let mut store = SignatureStore::new();
        for k in 0..n {
            let mut values = vec![0.0f32; SIGNATURE_DIM];
            for (i, v) in values.iter_mut().enumerate() {
                *v = base[i % base.len()] * ((k + 1) as f32 * 0.043).sin();
            }
            let sig = Signature {
                values,
                image_path: format!("img{k}.png"),
                device_id: "CamA_0".into(),
                version: VersionHash([3; 32]),
            };
            let id = store.put(&sig).unwrap();
            let back = store.get(id).unwrap();
            prop_assert!(back.values.iter().zip(&sig.values).all(|(a, b)| a.to_bits() == b.to_bits()));
            // idempotent
            prop_assert_eq!(store.put(&sig).unwrap(), id);
        }
        prop_assert_eq!(store.len(), n);
    }

    #[test]
    fn grid_threshold_matches_brute_force_scan(
        scores in prop::collection::vec(0.0f64..1.0, 2..60),
        labels in prop::collection::vec(any::<bool>(), 2..60),
    ) {
        let n = scores.len().min(labels.len());
        let scores = &scores[..n];
        let labels = &labels[..n];
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        // exhaustive grid: the distinct scores themselves
        let t = best_threshold(scores, labels, scores).unwrap();
        // brute force over all decision boundaries
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sorted.dedup();
        let mut candidates = vec![sorted[0] / 2.0];
        candidates.extend(sorted.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        candidates.push((sorted[sorted.len() - 1] + 1.0) / 2.0 + 0.5);
        let brute = candidates
            .into_iter()
            .map(|eta| f1_at(scores, labels, eta))
            .fold(0.0f64, f64::max);
        prop_assert!((t.selection_f1 - brute).abs() < 1e-12,
            "grid {} vs brute force {}", t.selection_f1, brute);
    }
}
