//! The similarity network: maps a pair of signatures to a same-device
//! score in [0,1].
//!
//! Both signatures pass through one shared dense layer (2048 units, ReLU);
//! the two branch outputs are concatenated with the elementwise product of
//! the raw signatures into a 5120-vector, then a small ReLU layer and a
//! single sigmoid unit close the network. Trained Siamese-style on labeled
//! pairs with binary cross-entropy.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{
    bce_logits_backward, bce_logits_loss, relu, relu_backward, sigmoid, Dense, HasParams, Param,
    SgdHyper,
};
use crate::signature::{Signature, SIGNATURE_DIM};
use crate::train_log::EpochStats;
use crate::util::{mix_seed, mix_seed_n, VersionHash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSampling {
    /// Every unordered pair once.
    All,
    /// All positive pairs plus an equal-count seeded sample of negatives.
    Balanced,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase2Config {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub pair_sampling: PairSampling,
    pub seed: u64,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Phase2Config {
            epochs: 30,
            learning_rate: 0.005,
            lr_decay_factor: 0.5,
            lr_decay_every: 3,
            batch_size: 256,
            pair_sampling: PairSampling::All,
            seed: 0,
        }
    }
}

impl Phase2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return Err(Error::InvalidConfig(
                "lr_decay_factor must be in (0,1]".into(),
            ));
        }
        if self.lr_decay_every == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and lr_decay_every must be nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Learning rate for a 1-based epoch: decays by `lr_decay_factor` every
/// `lr_decay_every` epochs.
pub fn lr_at_epoch(cfg: &Phase2Config, epoch: usize) -> f64 {
    let steps = (epoch - 1) / cfg.lr_decay_every;
    cfg.learning_rate * cfg.lr_decay_factor.powi(steps as i32)
}

/// An unordered pair of signatures (by index into the caller's signature
/// slice) labeled 1 when both come from the same device.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignaturePair {
    pub a: usize,
    pub b: usize,
    pub label: bool,
}

/// Generates labeled pairs from a signature list.
///
/// All signatures must share one extractor version; at least one
/// same-device pair must exist.
pub fn make_pairs(
    sigs: &[Signature],
    mode: PairSampling,
    seed: u64,
) -> Result<Vec<SignaturePair>> {
    if sigs.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 signatures to form pairs, got {}",
            sigs.len()
        )));
    }
    for s in &sigs[1..] {
        if s.version != sigs[0].version {
            return Err(Error::VersionMismatch {
                a: sigs[0].version.to_hex(),
                b: s.version.to_hex(),
            });
        }
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for a in 0..sigs.len() {
        for b in (a + 1)..sigs.len() {
            let label = sigs[a].device_id == sigs[b].device_id;
            let pair = SignaturePair { a, b, label };
            if label {
                positives.push(pair);
            } else {
                negatives.push(pair);
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::NoSameDevicePairs);
    }
    let mut pairs = match mode {
        PairSampling::All => {
            let mut all = positives;
            all.append(&mut negatives);
            all
        }
        PairSampling::Balanced => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "balanced-pairs"));
            negatives.shuffle(&mut rng);
            negatives.truncate(positives.len());
            positives.append(&mut negatives);
            positives
        }
    };
    pairs.sort_by_key(|p| (p.a, p.b));
    Ok(pairs)
}

/// Pair dataset file: a flat sequence of little-endian records
/// (sig1_id: u64, sig2_id: u64, label: u8), 17 bytes each.
pub fn write_pairs(path: &std::path::Path, pairs: &[SignaturePair], ids: &[u64]) -> Result<()> {
    let mut buf = Vec::with_capacity(pairs.len() * 17);
    for p in pairs {
        buf.extend_from_slice(&ids[p.a].to_le_bytes());
        buf.extend_from_slice(&ids[p.b].to_le_bytes());
        buf.push(p.label as u8);
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_pairs(path: &std::path::Path) -> Result<Vec<(u64, u64, u8)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 17 != 0 {
        return Err(Error::Other(format!(
            "pair file {} has size {} not divisible by the 17-byte record",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(17)
        .map(|c| {
            (
                u64::from_le_bytes(c[..8].try_into().unwrap()),
                u64::from_le_bytes(c[8..16].try_into().unwrap()),
                c[16],
            )
        })
        .collect())
}

/// Branch and fusion widths; the defaults are the production network, the
/// small variants exist for fast numeric verification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityNetSpec {
    pub sig_dim: usize,
    pub fc1_units: usize,
    pub hidden_units: usize,
}

impl Default for SimilarityNetSpec {
    fn default() -> Self {
        SimilarityNetSpec {
            sig_dim: SIGNATURE_DIM,
            fc1_units: 2048,
            hidden_units: 64,
        }
    }
}

impl SimilarityNetSpec {
    pub fn fusion_dim(&self) -> usize {
        2 * self.fc1_units + self.sig_dim
    }
}

#[derive(Debug, Clone)]
pub struct SimilarityNet {
    /// Shared across both signature branches.
    pub fc1: Dense,
    pub fc2: Dense,
    pub head: Dense,
    pub spec: SimilarityNetSpec,
}

pub struct Phase2Trace {
    a1: Array2<f64>,
    a2: Array2<f64>,
    fusion: Array2<f64>,
    hidden: Array2<f64>,
    pub logits: Array1<f64>,
}

pub fn build_similarity_net(spec: &SimilarityNetSpec, seed: u64) -> SimilarityNet {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "similarity-net-init"));
    SimilarityNet {
        fc1: Dense::new(spec.sig_dim, spec.fc1_units, &mut rng),
        fc2: Dense::new(spec.fusion_dim(), spec.hidden_units, &mut rng),
        head: Dense::new(spec.hidden_units, 1, &mut rng),
        spec: spec.clone(),
    }
}

impl SimilarityNet {
    /// Forward over a batch of signature pairs; rows of `s1`/`s2` align.
    pub fn forward(&self, s1: &Array2<f64>, s2: &Array2<f64>) -> Phase2Trace {
        let n = s1.nrows();
        let a1 = relu(&self.fc1.forward(s1));
        let a2 = relu(&self.fc1.forward(s2));
        let mut fusion = Array2::<f64>::zeros((n, self.spec.fusion_dim()));
        let f = self.spec.fc1_units;
        fusion.slice_mut(ndarray::s![.., ..f]).assign(&a1);
        fusion.slice_mut(ndarray::s![.., f..2 * f]).assign(&a2);
        fusion
            .slice_mut(ndarray::s![.., 2 * f..])
            .assign(&(s1 * s2));
        let hidden = relu(&self.fc2.forward(&fusion));
        let logits = self
            .head
            .forward(&hidden)
            .index_axis(Axis(1), 0)
            .to_owned();
        Phase2Trace {
            a1,
            a2,
            fusion,
            hidden,
            logits,
        }
    }

    /// Scores in [0,1] for a batch of pairs.
    pub fn score_batch(&self, s1: &Array2<f64>, s2: &Array2<f64>) -> Array1<f64> {
        self.forward(s1, s2).logits.mapv(sigmoid)
    }

    pub fn backward(
        &mut self,
        s1: &Array2<f64>,
        s2: &Array2<f64>,
        trace: &Phase2Trace,
        dlogits: &Array1<f64>,
    ) {
        let n = dlogits.len();
        let dl = dlogits
            .clone()
            .into_shape_with_order((n, 1))
            .expect("contiguous");
        let dh = self.head.backward(&trace.hidden, &dl);
        let dh_pre = relu_backward(&trace.hidden, &dh);
        let dfusion = self.fc2.backward(&trace.fusion, &dh_pre);
        let f = self.spec.fc1_units;
        let da1 = dfusion.slice(ndarray::s![.., ..f]).to_owned();
        let da2 = dfusion.slice(ndarray::s![.., f..2 * f]).to_owned();
        let da1_pre = relu_backward(&trace.a1, &da1);
        let da2_pre = relu_backward(&trace.a2, &da2);
        // shared fc1: both branches accumulate into the same gradients
        self.fc1.backward(s1, &da1_pre);
        self.fc1.backward(s2, &da2_pre);
    }

    /// Content hash of all similarity-network weights.
    pub fn weight_hash(&self) -> VersionHash {
        let mut h = Sha256::new();
        h.update(b"camfprint-similarity-v1");
        for (dim, p) in [
            (self.spec.sig_dim, &self.fc1.weight),
            (self.spec.fc1_units, &self.fc1.bias),
            (self.spec.fusion_dim(), &self.fc2.weight),
            (self.spec.hidden_units, &self.fc2.bias),
            (1, &self.head.weight),
            (1, &self.head.bias),
        ] {
            h.update((dim as u64).to_le_bytes());
            for v in p.value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        VersionHash::from_hasher(h)
    }
}

impl HasParams for SimilarityNet {
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![
            ("fc1.weight", &mut self.fc1.weight),
            ("fc1.bias", &mut self.fc1.bias),
            ("fc2.weight", &mut self.fc2.weight),
            ("fc2.bias", &mut self.fc2.bias),
            ("head.weight", &mut self.head.weight),
            ("head.bias", &mut self.head.bias),
        ]
    }
}

fn sig_rows(sigs: &[Signature], pairs: &[SignaturePair], pick_a: bool) -> Array2<f64> {
    let dim = sigs[0].values.len();
    let mut out = Array2::<f64>::zeros((pairs.len(), dim));
    for (row, p) in pairs.iter().enumerate() {
        let src = &sigs[if pick_a { p.a } else { p.b }].values;
        for (o, &v) in out.row_mut(row).iter_mut().zip(src) {
            *o = v as f64;
        }
    }
    out
}

/// Score of a single signature pair (Eq. 3's f_sim applied to stored
/// signatures). Versions must match: signatures from different extractors
/// are not comparable.
pub fn score(net: &SimilarityNet, s1: &Signature, s2: &Signature) -> Result<f64> {
    if s1.version != s2.version {
        return Err(Error::VersionMismatch {
            a: s1.version.to_hex(),
            b: s2.version.to_hex(),
        });
    }
    if s1.values.len() != net.spec.sig_dim || s2.values.len() != net.spec.sig_dim {
        return Err(Error::BadSignatureLength(s1.values.len()));
    }
    let to_row = |s: &Signature| {
        Array2::from_shape_vec(
            (1, s.values.len()),
            s.values.iter().map(|&v| v as f64).collect(),
        )
        .unwrap()
    };
    Ok(net.score_batch(&to_row(s1), &to_row(s2))[0])
}

pub struct Phase2Output {
    pub net: SimilarityNet,
    pub log: Vec<EpochStats>,
}

/// Phase-II training: plain SGD on binary cross-entropy with the stepped
/// learning-rate schedule. Per-epoch validation reports accuracy and F1 at
/// a 0.5 cut (the operating threshold is selected afterwards).
pub fn train_phase2(
    mut net: SimilarityNet,
    sigs: &[Signature],
    train_pairs: &[SignaturePair],
    val_pairs: &[SignaturePair],
    cfg: &Phase2Config,
) -> Result<Phase2Output> {
    cfg.validate()?;
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::InvalidConfig(
            "phase-2 training needs both train and val pairs".into(),
        ));
    }
    if train_pairs.iter().all(|p| p.label) || train_pairs.iter().all(|p| !p.label) {
        return Err(Error::InvalidConfig(
            "train pairs must contain both labels".into(),
        ));
    }
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let hyper = SgdHyper {
            lr: lr_at_epoch(cfg, epoch),
            momentum: 0.0,
            weight_decay: 0.0,
        };
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(cfg.seed, "phase2-epoch", epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<SignaturePair> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let s1 = sig_rows(sigs, &batch, true);
            let s2 = sig_rows(sigs, &batch, false);
            let targets = Array1::from_iter(batch.iter().map(|p| p.label as u8 as f64));
            let trace = net.forward(&s1, &s2);
            let loss = bce_logits_loss(&trace.logits, &targets);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: 2,
                    epoch,
                    batch: batch_no,
                });
            }
            loss_sum += loss * batch.len() as f64;
            for (&z, &y) in trace.logits.iter().zip(&targets) {
                if (sigmoid(z) >= 0.5) == (y > 0.5) {
                    correct += 1;
                }
            }
            let dlogits = bce_logits_backward(&trace.logits, &targets);
            net.zero_grads();
            net.backward(&s1, &s2, &trace, &dlogits);
            net.sgd_step(&hyper);
        }
        let (val_loss, val_acc, val_f1) = eval_pairs(&net, sigs, val_pairs, cfg.batch_size);
        log.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_pairs.len() as f64,
            val_loss,
            train_acc: correct as f64 / train_pairs.len() as f64,
            val_acc,
            val_f1,
        });
    }
    Ok(Phase2Output { net, log })
}

fn eval_pairs(
    net: &SimilarityNet,
    sigs: &[Signature],
    pairs: &[SignaturePair],
    batch_size: usize,
) -> (f64, f64, Option<f64>) {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut scores = Vec::with_capacity(pairs.len());
    let mut labels = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(batch_size) {
        let s1 = sig_rows(sigs, chunk, true);
        let s2 = sig_rows(sigs, chunk, false);
        let targets = Array1::from_iter(chunk.iter().map(|p| p.label as u8 as f64));
        let trace = net.forward(&s1, &s2);
        loss_sum += bce_logits_loss(&trace.logits, &targets) * chunk.len() as f64;
        for (&z, p) in trace.logits.iter().zip(chunk) {
            let s = sigmoid(z);
            if (s >= 0.5) == p.label {
                correct += 1;
            }
            scores.push(s);
            labels.push(p.label);
        }
    }
    let f1 = if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
        Some(f1_at(&scores, &labels, 0.5))
    } else {
        None
    };
    (
        loss_sum / pairs.len() as f64,
        correct as f64 / pairs.len() as f64,
        f1,
    )
}

/// F1 of the rule `score >= eta -> same device`.
pub fn f1_at(scores: &[f64], labels: &[bool], eta: f64) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fneg = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= eta, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if 2 * tp + fp + fneg == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Threshold {
    pub eta: f64,
    pub selection_f1: f64,
}

/// The grid scanned by default: 0.50 to 0.95 in steps of 0.05, 0.96 to
/// 0.99 in steps of 0.01, then 0.995.
pub fn default_threshold_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (10..=19).map(|k| k as f64 * 0.05).collect();
    grid.extend((96..=99).map(|k| k as f64 / 100.0));
    grid.push(0.995);
    grid
}

/// Grid value maximizing validation F1; ties break toward the larger eta
/// (stricter matching favors precision).
pub fn best_threshold(scores: &[f64], labels: &[bool], grid: &[f64]) -> Result<Threshold> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::F1Undefined);
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = Threshold {
        eta: sorted[0],
        selection_f1: -1.0,
    };
    for &eta in &sorted {
        let f1 = f1_at(scores, labels, eta);
        if f1 >= best.selection_f1 {
            best = Threshold {
                eta,
                selection_f1: f1,
            };
        }
    }
    Ok(best)
}

/// Scores the validation pairs and picks the F1-optimal grid threshold.
pub fn select_threshold(
    net: &SimilarityNet,
    sigs: &[Signature],
    val_pairs: &[SignaturePair],
    grid: &[f64],
) -> Result<Threshold> {
    let mut scores = Vec::with_capacity(val_pairs.len());
    let mut labels = Vec::with_capacity(val_pairs.len());
    for chunk in val_pairs.chunks(512) {
        let s1 = sig_rows(sigs, chunk, true);
        let s2 = sig_rows(sigs, chunk, false);
        let batch_scores = net.score_batch(&s1, &s2);
        scores.extend(batch_scores.iter().cloned());
        labels.extend(chunk.iter().map(|p| p.label));
    }
    best_threshold(&scores, &labels, grid)
}

/// On-disk record of a threshold selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdArtifact {
    pub eta: f64,
    pub selection_f1: f64,
    pub grid: Vec<f64>,
    pub extractor_version: VersionHash,
    pub similarity_version: VersionHash,
}

impl ThresholdArtifact {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
