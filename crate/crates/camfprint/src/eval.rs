//! Similarity-matrix evaluation.
//!
//! For every ordered device pair (i, j), `n_pairs_per_cell` image pairs are
//! drawn with replacement from C_i x C_j, scored, binarized at eta
//! (score >= eta counts as same-device) and averaged into cell (i, j).
//! Diagonal cells should approach 1, off-diagonal cells 0.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::parse_device_id;
use crate::error::{Error, Result};
use crate::signature::Signature;
use crate::similarity::SimilarityNet;
use crate::util::mix_seed_n;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_pairs_per_cell: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_pairs_per_cell: 100,
            eta: 0.5,
            seed: 0,
        }
    }
}

/// Signatures of one device available to the evaluator.
#[derive(Debug, Clone)]
pub struct DeviceSignatures {
    pub device_id: String,
    pub signatures: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub devices: Vec<String>,
    /// cells[i][j]: mean binarized score over sampled pairs from (C_i, C_j).
    pub cells: Vec<Vec<f64>>,
    pub n_pairs_per_cell: usize,
    pub eta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Confusion {
    pub device_i: String,
    pub device_j: String,
    pub cell: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: SimilarityMatrix,
    pub overall_accuracy: f64,
    pub per_cell_accuracy: Vec<Vec<f64>>,
    pub worst_confusions: Vec<Confusion>,
    pub same_model_confusions: Vec<Confusion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SameModelReport {
    /// Mean off-diagonal cell value among same-model device pairs.
    pub same_model_mean_error: Option<f64>,
    pub cross_model_mean_error: Option<f64>,
    pub ranked_same_model: Vec<Confusion>,
}

/// Computes the similarity matrix with an arbitrary scorer. Per-cell RNG
/// streams are derived from (seed, i, j), so a cell's samples do not depend
/// on evaluation order.
pub fn similarity_matrix_with<F>(
    per_device: &[DeviceSignatures],
    mut scorer: F,
    cfg: &EvalConfig,
) -> Result<SimilarityMatrix>
where
    F: FnMut(&[f32], &[f32]) -> f64,
{
    if per_device.is_empty() {
        return Err(Error::InvalidConfig("no devices to evaluate".into()));
    }
    if cfg.n_pairs_per_cell == 0 {
        return Err(Error::InvalidConfig("n_pairs_per_cell must be nonzero".into()));
    }
    for d in per_device {
        if d.signatures.is_empty() {
            return Err(Error::NoTestSignatures(d.device_id.clone()));
        }
    }
    let n = per_device.len();
    let mut cells = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(
                cfg.seed,
                "eval-cell",
                (i * n + j) as u64,
            ));
            let a = &per_device[i].signatures;
            let b = &per_device[j].signatures;
            let mut hits = 0usize;
            for _ in 0..cfg.n_pairs_per_cell {
                let sa = &a[rng.gen_range(0..a.len())];
                let sb = &b[rng.gen_range(0..b.len())];
                if scorer(sa, sb) >= cfg.eta {
                    hits += 1;
                }
            }
            cells[i][j] = hits as f64 / cfg.n_pairs_per_cell as f64;
        }
    }
    Ok(SimilarityMatrix {
        devices: per_device.iter().map(|d| d.device_id.clone()).collect(),
        cells,
        n_pairs_per_cell: cfg.n_pairs_per_cell,
        eta: cfg.eta,
        seed: cfg.seed,
    })
}

/// [`similarity_matrix_with`] driven by a trained similarity network.
pub fn similarity_matrix(
    per_device: &[DeviceSignatures],
    net: &SimilarityNet,
    cfg: &EvalConfig,
) -> Result<SimilarityMatrix> {
    let dim = net.spec.sig_dim;
    similarity_matrix_with(
        per_device,
        |a, b| {
            debug_assert_eq!(a.len(), dim);
            let s1 = ndarray::Array2::from_shape_vec(
                (1, dim),
                a.iter().map(|&v| v as f64).collect(),
            )
            .unwrap();
            let s2 = ndarray::Array2::from_shape_vec(
                (1, dim),
                b.iter().map(|&v| v as f64).collect(),
            )
            .unwrap();
            net.score_batch(&s1, &s2)[0]
        },
        cfg,
    )
}

/// Groups a flat signature list by device in the order of `devices`.
pub fn group_by_device(devices: &[String], sigs: &[&Signature]) -> Vec<DeviceSignatures> {
    devices
        .iter()
        .map(|d| DeviceSignatures {
            device_id: d.clone(),
            signatures: sigs
                .iter()
                .filter(|s| &s.device_id == d)
                .map(|s| s.values.clone())
                .collect(),
        })
        .collect()
}

/// Derives per-cell accuracies and the confusion rankings from a matrix.
///
/// A cell is "right" in proportion to its value on the diagonal and to one
/// minus its value off it; the overall accuracy is the unweighted mean over
/// all N^2 cells.
pub fn overall_accuracy(matrix: &SimilarityMatrix) -> EvalReport {
    let n = matrix.devices.len();
    let mut per_cell = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    let mut confusions = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let acc = if i == j {
                matrix.cells[i][j]
            } else {
                1.0 - matrix.cells[i][j]
            };
            per_cell[i][j] = acc;
            total += acc;
            if i != j && matrix.cells[i][j] > 0.0 {
                confusions.push(Confusion {
                    device_i: matrix.devices[i].clone(),
                    device_j: matrix.devices[j].clone(),
                    cell: matrix.cells[i][j],
                });
            }
        }
    }
    confusions.sort_by(|a, b| {
        b.cell
            .partial_cmp(&a.cell)
            .unwrap()
            .then_with(|| (a.device_i.clone(), a.device_j.clone()).cmp(&(b.device_i.clone(), b.device_j.clone())))
    });
    let same_model_confusions = confusions
        .iter()
        .filter(|c| is_same_model(&c.device_i, &c.device_j))
        .cloned()
        .collect();
    EvalReport {
        matrix: matrix.clone(),
        overall_accuracy: total / (n * n) as f64,
        per_cell_accuracy: per_cell,
        worst_confusions: confusions,
        same_model_confusions,
    }
}

fn is_same_model(device_i: &str, device_j: &str) -> bool {
    if device_i == device_j {
        return false;
    }
    match (parse_device_id(device_i), parse_device_id(device_j)) {
        (Some((mi, _)), Some((mj, _))) => mi == mj,
        _ => false,
    }
}

/// Splits the off-diagonal error mass into same-model and cross-model
/// groups; same-model confusion is the expected failure mode, since units
/// of one product line share the manufacturing process.
pub fn same_model_report(report: &EvalReport) -> SameModelReport {
    let n = report.matrix.devices.len();
    let mut same = Vec::new();
    let mut cross = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = report.matrix.cells[i][j];
            if is_same_model(&report.matrix.devices[i], &report.matrix.devices[j]) {
                same.push(v);
            } else {
                cross.push(v);
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    SameModelReport {
        same_model_mean_error: mean(&same),
        cross_model_mean_error: mean(&cross),
        ranked_same_model: report.same_model_confusions.clone(),
    }
}

impl SimilarityMatrix {
    /// CSV with a device header row and a device label column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("device");
        for d in &self.devices {
            out.push(',');
            out.push_str(d);
        }
        out.push('\n');
        for (i, d) in self.devices.iter().enumerate() {
            out.push_str(d);
            for v in &self.cells[i] {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_devices(counts: &[(&str, usize)]) -> Vec<DeviceSignatures> {
        counts
            .iter()
            .map(|(d, n)| DeviceSignatures {
                device_id: d.to_string(),
                signatures: (0..*n).map(|k| vec![k as f32; 4]).collect(),
            })
            .collect()
    }

    #[test]
    fn constant_one_scorer_fills_every_cell() {
        let devs = toy_devices(&[("CamA_0", 3), ("CamB_0", 2)]);
        let m = similarity_matrix_with(&devs, |_, _| 1.0, &EvalConfig::default()).unwrap();
        assert_eq!(m.cells.len(), 2);
        assert!(m.cells.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn cells_are_multiples_of_the_sample_quantum() {
        let devs = toy_devices(&[("CamA_0", 3), ("CamB_0", 3)]);
        let cfg = EvalConfig {
            n_pairs_per_cell: 10,
            eta: 0.5,
            seed: 3,
        };
        // score by first-element equality: mixes hits and misses
        let m = similarity_matrix_with(&devs, |a, b| if a[0] == b[0] { 1.0 } else { 0.0 }, &cfg)
            .unwrap();
        for &v in m.cells.iter().flatten() {
            let scaled = v * 10.0;
            assert!((scaled - scaled.round()).abs() < 1e-9, "cell {v}");
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn matrix_is_deterministic_and_order_invariant_per_cell() {
        let devs = toy_devices(&[("CamA_0", 4), ("CamB_0", 4), ("CamC_0", 4)]);
        let cfg = EvalConfig {
            n_pairs_per_cell: 25,
            eta: 0.5,
            seed: 9,
        };
        let score = |a: &[f32], b: &[f32]| if a[0] == b[0] { 1.0 } else { 0.3 };
        let m1 = similarity_matrix_with(&devs, score, &cfg).unwrap();
        let m2 = similarity_matrix_with(&devs, score, &cfg).unwrap();
        assert_eq!(m1.cells, m2.cells);
        let other = similarity_matrix_with(
            &devs,
            score,
            &EvalConfig {
                seed: 10,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(m1.cells, other.cells);
    }

    #[test]
    fn empty_device_is_named_in_the_error() {
        let mut devs = toy_devices(&[("CamA_0", 2)]);
        devs.push(DeviceSignatures {
            device_id: "CamB_0".into(),
            signatures: vec![],
        });
        match similarity_matrix_with(&devs, |_, _| 1.0, &EvalConfig::default()) {
            Err(Error::NoTestSignatures(d)) => assert_eq!(d, "CamB_0"),
            other => panic!("expected NoTestSignatures, got {other:?}"),
        }
    }

    fn matrix_from(cells: Vec<Vec<f64>>, devices: Vec<&str>) -> SimilarityMatrix {
        SimilarityMatrix {
            devices: devices.into_iter().map(String::from).collect(),
            cells,
            n_pairs_per_cell: 100,
            eta: 0.9,
            seed: 0,
        }
    }

    #[test]
    fn identity_matrix_scores_perfectly() {
        let m = matrix_from(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec!["CamA_0", "CamB_0"],
        );
        let r = overall_accuracy(&m);
        assert_eq!(r.overall_accuracy, 1.0);
        assert!(r.worst_confusions.is_empty());
    }

    #[test]
    fn all_zero_matrix_gets_only_off_diagonals_right() {
        let n = 3;
        let m = matrix_from(
            vec![vec![0.0; n]; n],
            vec!["CamA_0", "CamB_0", "CamC_0"],
        );
        let r = overall_accuracy(&m);
        let want = (n * n - n) as f64 / (n * n) as f64;
        assert!((r.overall_accuracy - want).abs() < 1e-12);
    }

    #[test]
    fn flipping_one_off_diagonal_costs_one_over_n_squared() {
        let mut cells = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        cells[0][0] = 1.0;
        cells[1][1] = 1.0;
        let base = overall_accuracy(&matrix_from(cells.clone(), vec!["CamA_0", "CamB_0"]));
        cells[0][1] = 1.0;
        let worse = overall_accuracy(&matrix_from(cells, vec!["CamA_0", "CamB_0"]));
        assert!((base.overall_accuracy - worse.overall_accuracy - 0.25).abs() < 1e-12);
    }

    #[test]
    fn per_cell_accuracy_follows_the_invariant() {
        let m = matrix_from(
            vec![vec![0.8, 0.3], vec![0.1, 0.9]],
            vec!["CamA_0", "CamB_0"],
        );
        let r = overall_accuracy(&m);
        assert_eq!(r.per_cell_accuracy[0][0], 0.8);
        assert_eq!(r.per_cell_accuracy[0][1], 0.7);
        assert_eq!(r.per_cell_accuracy[1][0], 0.9);
        assert!((r.overall_accuracy - (0.8 + 0.7 + 0.9 + 0.9) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn same_model_pairs_are_grouped_separately() {
        let m = matrix_from(
            vec![
                vec![1.0, 0.6, 0.1],
                vec![0.5, 1.0, 0.0],
                vec![0.2, 0.0, 1.0],
            ],
            vec!["CamA_0", "CamA_1", "CamB_0"],
        );
        let r = overall_accuracy(&m);
        let sm = same_model_report(&r);
        // same-model off-diagonals: (0,1)=0.6, (1,0)=0.5
        assert!((sm.same_model_mean_error.unwrap() - 0.55).abs() < 1e-12);
        // cross-model: 0.1, 0.0, 0.2, 0.0
        assert!((sm.cross_model_mean_error.unwrap() - 0.075).abs() < 1e-12);
        assert_eq!(r.worst_confusions[0].cell, 0.6);
        assert_eq!(
            r.same_model_confusions
                .iter()
                .map(|c| c.cell)
                .collect::<Vec<_>>(),
            vec![0.6, 0.5]
        );
    }

    #[test]
    fn zero_error_matrix_has_empty_confusion_list() {
        let m = matrix_from(
            vec![vec![0.9, 0.0], vec![0.0, 1.0]],
            vec!["CamA_0", "CamA_1"],
        );
        let r = overall_accuracy(&m);
        assert!(r.worst_confusions.is_empty());
        assert!(r.same_model_confusions.is_empty());
    }

    #[test]
    fn csv_has_header_row_and_label_column() {
        let m = matrix_from(
            vec![vec![1.0, 0.25], vec![0.0, 0.75]],
            vec!["CamA_0", "CamB_0"],
        );
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "device,CamA_0,CamB_0");
        assert_eq!(lines[1], "CamA_0,1,0.25");
        assert_eq!(lines[2], "CamB_0,0,0.75");
    }

    #[test]
    fn sampled_cells_converge_to_enumerated_means() {
        // 2 devices x 3 images; scorer depends on the images drawn, so each
        // cell is a Bernoulli mean estimable by exhaustive enumeration.
        let devs = toy_devices(&[("CamA_0", 3), ("CamB_0", 3)]);
        let score = |a: &[f32], b: &[f32]| if (a[0] - b[0]).abs() <= 1.0 { 0.9 } else { 0.1 };
        let eta = 0.5;
        let n_runs = 40u64;
        let n_pairs = 100usize;
        for i in 0..2 {
            for j in 0..2 {
                // exhaustive mean over C_i x C_j (draws independent, may repeat)
                let mut exact = 0.0;
                for a in &devs[i].signatures {
                    for b in &devs[j].signatures {
                        if score(a, b) >= eta {
                            exact += 1.0;
                        }
                    }
                }
                exact /= 9.0;
                let mut sum = 0.0;
                for run in 0..n_runs {
                    let cfg = EvalConfig {
                        n_pairs_per_cell: n_pairs,
                        eta,
                        seed: 1000 + run,
                    };
                    let m = similarity_matrix_with(&devs, score, &cfg).unwrap();
                    sum += m.cells[i][j];
                }
                let mean = sum / n_runs as f64;
                let se = (exact * (1.0 - exact) / (n_runs as usize * n_pairs) as f64).sqrt();
                assert!(
                    (mean - exact).abs() <= 3.0 * se.max(1e-9),
                    "cell ({i},{j}): sampled {mean} vs exact {exact} (se {se})"
                );
            }
        }
    }
}
