//! The signature network: a device-classification CNN that, truncated at
//! its 1024-unit dense layer, becomes the signature extractor.
//!
//! Layout (four conv blocks, each conv -> batchnorm -> tanh -> maxpool 3x3,
//! then two dense blocks):
//!
//! ```text
//! 1: conv 96x7x7   bn tanh pool
//! 2: conv 64x5x5   bn tanh pool
//! 3: conv 64x5x5   bn tanh pool
//! 4: conv 128x1x1  bn tanh pool
//! 5: dense 1024    tanh          <- signature tap
//! 6: dense 200     tanh, dense #devices softmax
//! ```

use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Manifest, Split};
use crate::error::{Error, Result};
use crate::nn::{
    softmax_xent_backward, softmax_xent_loss, tanh_backward, tanh_forward, tanh_into, BatchNorm2d,
    BnCache,
    Conv2d, Dense, HasParams, MaxPool2d, Param, PoolCache, SgdHyper,
};
use crate::train_log::EpochStats;
use crate::util::{mix_seed, mix_seed_n, VersionHash};

pub const SIGNATURE_DIM: usize = 1024;

/// (out channels, kernel size) of the four conv blocks.
const CONV_BLOCKS: [(usize, usize); 4] = [(96, 7), (64, 5), (64, 5), (128, 1)];
const HIDDEN_DIM: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase1Config {
    pub epochs: usize,
    pub stop_epoch: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Phase1Config {
            epochs: 15,
            stop_epoch: 5,
            learning_rate: 0.001,
            momentum: 0.95,
            weight_decay: 0.0005,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl Phase1Config {
    pub fn validate(&self) -> Result<()> {
        if self.stop_epoch < 1 || self.stop_epoch > self.epochs {
            return Err(Error::InvalidConfig(format!(
                "stop_epoch must be in 1..={}, got {}",
                self.epochs, self.stop_epoch
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be nonzero".into()));
        }
        Ok(())
    }
}

/// Fixed affine pixel preprocessing, stored with the weights so signatures
/// stay comparable across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocess {
    pub input_size: (usize, usize),
    pub channel_mean: [f64; 3],
}

impl Preprocess {
    /// Decode, resize to `input_size` and scale into [0,1], channels-first.
    pub fn load_unit(&self, path: &str) -> Result<Array3<f64>> {
        let img = image::open(path)
            .map_err(|e| Error::image(path, e))?
            .to_rgb8();
        let (h, w) = self.input_size;
        let img = if img.dimensions() != (w as u32, h as u32) {
            image::imageops::resize(
                &img,
                w as u32,
                h as u32,
                image::imageops::FilterType::Triangle,
            )
        } else {
            img
        };
        let mut out = Array3::<f64>::zeros((3, h, w));
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                out[[c, y as usize, x as usize]] = px[c] as f64 / 255.0;
            }
        }
        Ok(out)
    }

    /// Full pipeline: decode, resize, scale, mean-center.
    pub fn apply(&self, path: &str) -> Result<Array3<f64>> {
        let mut a = self.load_unit(path)?;
        for c in 0..3 {
            let m = self.channel_mean[c];
            for v in a.index_axis_mut(Axis(0), c).iter_mut() {
                *v -= m;
            }
        }
        Ok(a)
    }
}

#[derive(Debug, Clone)]
pub struct SignatureNet {
    pub convs: Vec<Conv2d>,
    pub bns: Vec<BatchNorm2d>,
    pool: MaxPool2d,
    pub fc_sig: Dense,
    pub fc_hidden: Dense,
    pub fc_out: Dense,
    pub input_size: (usize, usize),
    pub num_devices: usize,
    pub flat_dim: usize,
}

/// Everything the backward pass needs from one training forward.
pub struct Phase1Trace {
    conv_in: Vec<Array4<f64>>,
    bn_caches: Vec<BnCache>,
    act_out: Vec<Array4<f64>>,
    pool_caches: Vec<PoolCache>,
    flat: Array2<f64>,
    pub signatures: Array2<f64>,
    hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Spatial size of each block's output for a given input, or the 1-based
/// index of the block whose input has already collapsed to zero.
fn block_sizes(input_size: (usize, usize)) -> std::result::Result<Vec<(usize, usize)>, usize> {
    let pool = MaxPool2d::new(3, 3);
    let (mut h, mut w) = input_size;
    let mut sizes = Vec::with_capacity(4);
    for block in 1..=4 {
        if h == 0 || w == 0 {
            return Err(block);
        }
        h = pool.out_size(h);
        w = pool.out_size(w);
        sizes.push((h, w));
    }
    if h == 0 || w == 0 {
        return Err(5);
    }
    Ok(sizes)
}

/// Builds the untrained network. Initialization is fully determined by
/// `seed`.
pub fn build_signature_net(
    num_devices: usize,
    input_size: (usize, usize),
    seed: u64,
) -> Result<SignatureNet> {
    if num_devices < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 devices, got {num_devices}"
        )));
    }
    let sizes = block_sizes(input_size).map_err(|block| Error::InputTooSmall {
        height: input_size.0,
        width: input_size.1,
        block,
    })?;
    let (h4, w4) = sizes[3];
    let flat_dim = CONV_BLOCKS[3].0 * h4 * w4;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, "signature-net-init"));
    let mut convs = Vec::new();
    let mut bns = Vec::new();
    let mut in_ch = 3;
    for (out_ch, k) in CONV_BLOCKS {
        convs.push(Conv2d::new(in_ch, out_ch, k, &mut rng));
        bns.push(BatchNorm2d::new(out_ch));
        in_ch = out_ch;
    }
    Ok(SignatureNet {
        convs,
        bns,
        pool: MaxPool2d::new(3, 3),
        fc_sig: Dense::new(flat_dim, SIGNATURE_DIM, &mut rng),
        fc_hidden: Dense::new(SIGNATURE_DIM, HIDDEN_DIM, &mut rng),
        fc_out: Dense::new(HIDDEN_DIM, num_devices, &mut rng),
        input_size,
        num_devices,
        flat_dim,
    })
}

impl SignatureNet {
    pub fn forward_train(&mut self, x: &Array4<f64>) -> Phase1Trace {
        let n = x.dim().0;
        let mut conv_in = vec![x.clone()];
        let mut bn_caches = Vec::with_capacity(4);
        let mut act_out = Vec::with_capacity(4);
        let mut pool_caches = Vec::with_capacity(4);
        let mut cur = x.clone();
        for i in 0..4 {
            let c = self.convs[i].forward(&cur);
            let (b, cache) = self.bns[i].forward_train(&c);
            let a = tanh_into(b);
            let (p, pcache) = self.pool.forward(&a);
            bn_caches.push(cache);
            act_out.push(a);
            pool_caches.push(pcache);
            cur = p;
            if i < 3 {
                conv_in.push(cur.clone());
            }
        }
        let flat = cur
            .into_shape_with_order((n, self.flat_dim))
            .expect("pool output is contiguous");
        let signatures = tanh_into(self.fc_sig.forward(&flat));
        let hidden = tanh_into(self.fc_hidden.forward(&signatures));
        let logits = self.fc_out.forward(&hidden);
        Phase1Trace {
            conv_in,
            bn_caches,
            act_out,
            pool_caches,
            flat,
            signatures,
            hidden,
            logits,
        }
    }

    /// Inference pass: batchnorm uses running statistics, nothing is cached.
    /// Returns (signatures, logits).
    pub fn forward_eval(&self, x: &Array4<f64>) -> (Array2<f64>, Array2<f64>) {
        let n = x.dim().0;
        let mut cur = x.clone();
        for i in 0..4 {
            let c = self.convs[i].forward(&cur);
            let b = self.bns[i].forward_eval(&c);
            let a = tanh_into(b);
            let (p, _) = self.pool.forward(&a);
            cur = p;
        }
        let flat = cur
            .into_shape_with_order((n, self.flat_dim))
            .expect("pool output is contiguous");
        let signatures = tanh_into(self.fc_sig.forward(&flat));
        let hidden = tanh_into(self.fc_hidden.forward(&signatures));
        let logits = self.fc_out.forward(&hidden);
        (signatures, logits)
    }

    pub fn backward(&mut self, trace: &Phase1Trace, dlogits: &Array2<f64>) {
        let d_hidden = self.fc_out.backward(&trace.hidden, dlogits);
        let d_hidden_pre = tanh_backward(&trace.hidden, &d_hidden);
        let d_sig = self.fc_hidden.backward(&trace.signatures, &d_hidden_pre);
        let d_sig_pre = tanh_backward(&trace.signatures, &d_sig);
        let d_flat = self.fc_sig.backward(&trace.flat, &d_sig_pre);
        let (h4, w4) = block_sizes(self.input_size).unwrap()[3];
        let n = d_flat.dim().0;
        let mut d_cur = d_flat
            .into_shape_with_order((n, CONV_BLOCKS[3].0, h4, w4))
            .expect("flat gradient is contiguous");
        for i in (0..4).rev() {
            let d_pool_in = self.pool.backward(&trace.pool_caches[i], &d_cur);
            let d_act = tanh_backward(&trace.act_out[i], &d_pool_in);
            let d_bn = self.bns[i].backward(&trace.bn_caches[i], &d_act);
            d_cur = self.convs[i].backward(&trace.conv_in[i], &d_bn);
        }
    }

    /// Content hash of blocks 1-5 plus preprocessing: everything that
    /// determines a signature. Truncation preserves it.
    pub fn feature_hash(&self, preprocess: &Preprocess) -> VersionHash {
        let mut h = Sha256::new();
        h.update(b"camfprint-extractor-v1");
        h.update((self.input_size.0 as u64).to_le_bytes());
        h.update((self.input_size.1 as u64).to_le_bytes());
        for m in preprocess.channel_mean {
            h.update(m.to_le_bytes());
        }
        for i in 0..4 {
            hash_param(&mut h, &self.convs[i].weight);
            hash_param(&mut h, &self.convs[i].bias);
            hash_param(&mut h, &self.bns[i].gamma);
            hash_param(&mut h, &self.bns[i].beta);
            for v in self.bns[i].running_mean.iter().chain(self.bns[i].running_var.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        hash_param(&mut h, &self.fc_sig.weight);
        hash_param(&mut h, &self.fc_sig.bias);
        VersionHash::from_hasher(h)
    }
}

fn hash_param(h: &mut Sha256, p: &Param) {
    for v in p.value.iter() {
        h.update(v.to_le_bytes());
    }
}

impl HasParams for SignatureNet {
    fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        const CONV_NAMES: [(&str, &str); 4] = [
            ("conv1.weight", "conv1.bias"),
            ("conv2.weight", "conv2.bias"),
            ("conv3.weight", "conv3.bias"),
            ("conv4.weight", "conv4.bias"),
        ];
        const BN_NAMES: [(&str, &str); 4] = [
            ("bn1.gamma", "bn1.beta"),
            ("bn2.gamma", "bn2.beta"),
            ("bn3.gamma", "bn3.beta"),
            ("bn4.gamma", "bn4.beta"),
        ];
        let mut out = Vec::with_capacity(22);
        for (i, (conv, bn)) in self.convs.iter_mut().zip(self.bns.iter_mut()).enumerate() {
            out.push((CONV_NAMES[i].0, &mut conv.weight));
            out.push((CONV_NAMES[i].1, &mut conv.bias));
            out.push((BN_NAMES[i].0, &mut bn.gamma));
            out.push((BN_NAMES[i].1, &mut bn.beta));
        }
        out.push(("fc_sig.weight", &mut self.fc_sig.weight));
        out.push(("fc_sig.bias", &mut self.fc_sig.bias));
        out.push(("fc_hidden.weight", &mut self.fc_hidden.weight));
        out.push(("fc_hidden.bias", &mut self.fc_hidden.bias));
        out.push(("fc_out.weight", &mut self.fc_out.weight));
        out.push(("fc_out.bias", &mut self.fc_out.bias));
        out
    }
}

/// A 1024-element embedding of one image, tagged with its origin and the
/// extractor that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Signature {
    pub values: Vec<f32>,
    pub image_path: String,
    pub device_id: String,
    pub version: VersionHash,
}

/// Blocks 1-5 of a (typically trained) signature network plus the fixed
/// preprocessing; immutable once built.
#[derive(Debug, Clone)]
pub struct SignatureExtractor {
    convs: Vec<Conv2d>,
    bns: Vec<BatchNorm2d>,
    pool: MaxPool2d,
    fc_sig: Dense,
    flat_dim: usize,
    pub preprocess: Preprocess,
    pub version: VersionHash,
}

/// Drops the classification head, keeping blocks 1-5 bit-identical.
pub fn truncate(net: &SignatureNet, preprocess: &Preprocess) -> SignatureExtractor {
    SignatureExtractor {
        convs: net.convs.clone(),
        bns: net.bns.clone(),
        pool: net.pool,
        fc_sig: net.fc_sig.clone(),
        flat_dim: net.flat_dim,
        preprocess: preprocess.clone(),
        version: net.feature_hash(preprocess),
    }
}

impl SignatureExtractor {
    /// Signature of an already-preprocessed (3,H,W) tensor.
    pub fn extract_array(&self, x: &Array3<f64>) -> Array1<f64> {
        let (c, h, w) = x.dim();
        let mut cur = x
            .clone()
            .into_shape_with_order((1, c, h, w))
            .expect("contiguous");
        for i in 0..4 {
            let cv = self.convs[i].forward(&cur);
            let b = self.bns[i].forward_eval(&cv);
            let a = tanh_into(b);
            let (p, _) = self.pool.forward(&a);
            cur = p;
        }
        let flat = cur
            .into_shape_with_order((1, self.flat_dim))
            .expect("contiguous");
        let sig = tanh_into(self.fc_sig.forward(&flat));
        sig.index_axis(Axis(0), 0).to_owned()
    }

    pub fn extract(&self, path: &str, device_id: &str) -> Result<Signature> {
        let x = self.preprocess.apply(path)?;
        let sig = self.extract_array(&x);
        Ok(Signature {
            values: sig.iter().map(|&v| v as f32).collect(),
            image_path: path.to_string(),
            device_id: device_id.to_string(),
            version: self.version,
        })
    }
}

pub struct Phase1Output {
    pub net: SignatureNet,
    pub preprocess: Preprocess,
    pub log: Vec<EpochStats>,
}

fn load_batch(
    preprocess: &Preprocess,
    manifest: &Manifest,
    indices: &[usize],
) -> Result<(Array4<f64>, Vec<usize>)> {
    let (h, w) = preprocess.input_size;
    let mut x = Array4::<f64>::zeros((indices.len(), 3, h, w));
    let mut labels = Vec::with_capacity(indices.len());
    for (slot, &idx) in indices.iter().enumerate() {
        let rec = &manifest.records[idx];
        let a = preprocess.apply(&rec.path)?;
        x.index_axis_mut(Axis(0), slot).assign(&a);
        labels.push(
            manifest
                .device_index(&rec.device_id)
                .ok_or_else(|| Error::Other(format!("device {} not in manifest", rec.device_id)))?,
        );
    }
    Ok((x, labels))
}

/// Per-channel mean of the train split in [0,1] scale.
fn train_channel_mean(manifest: &Manifest, input_size: (usize, usize)) -> Result<[f64; 3]> {
    let probe = Preprocess {
        input_size,
        channel_mean: [0.0; 3],
    };
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for rec in manifest.records_in(Split::Train) {
        let a = probe.load_unit(&rec.path)?;
        for c in 0..3 {
            sums[c] += a.index_axis(Axis(0), c).mean().unwrap();
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidConfig("manifest has no train split".into()));
    }
    Ok(sums.map(|s| s / count as f64))
}

struct SplitEval {
    loss: f64,
    acc: f64,
}

fn eval_split(
    net: &SignatureNet,
    preprocess: &Preprocess,
    manifest: &Manifest,
    indices: &[usize],
    batch_size: usize,
) -> Result<SplitEval> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let (x, labels) = load_batch(preprocess, manifest, chunk)?;
        let (_, logits) = net.forward_eval(&x);
        let (loss, probs) = softmax_xent_loss(&logits, &labels);
        loss_sum += loss * chunk.len() as f64;
        for (row, &label) in probs.rows().into_iter().zip(&labels) {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == label {
                correct += 1;
            }
        }
    }
    Ok(SplitEval {
        loss: loss_sum / indices.len() as f64,
        acc: correct as f64 / indices.len() as f64,
    })
}

/// Phase-I training: device classification with SGD + momentum.
///
/// Runs the full epoch budget but returns the weights snapshotted at
/// `cfg.stop_epoch` (batchnorm running statistics frozen with them), plus
/// the complete per-epoch log.
pub fn train_phase1(
    mut net: SignatureNet,
    manifest: &Manifest,
    cfg: &Phase1Config,
) -> Result<Phase1Output> {
    cfg.validate()?;
    let train_idx: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let val_idx: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.split == Split::Val)
        .map(|(i, _)| i)
        .collect();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidConfig(
            "phase-1 training needs both train and val splits".into(),
        ));
    }
    let preprocess = Preprocess {
        input_size: net.input_size,
        channel_mean: train_channel_mean(manifest, net.input_size)?,
    };
    let hyper_base = SgdHyper {
        lr: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut snapshot: Option<SignatureNet> = None;
    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed_n(cfg.seed, "phase1-epoch", epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = load_batch(&preprocess, manifest, chunk)?;
            let trace = net.forward_train(&x);
            let (loss, probs) = softmax_xent_loss(&trace.logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: 1,
                    epoch,
                    batch: batch_no,
                });
            }
            loss_sum += loss * chunk.len() as f64;
            for (row, &label) in probs.rows().into_iter().zip(&labels) {
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                if pred == label {
                    correct += 1;
                }
            }
            let dlogits = softmax_xent_backward(&probs, &labels);
            net.zero_grads();
            net.backward(&trace, &dlogits);
            net.sgd_step(&hyper_base);
        }
        let val = eval_split(&net, &preprocess, manifest, &val_idx, cfg.batch_size)?;
        log.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_idx.len() as f64,
            val_loss: val.loss,
            train_acc: correct as f64 / train_idx.len() as f64,
            val_acc: val.acc,
            val_f1: None,
        });
        if epoch == cfg.stop_epoch {
            snapshot = Some(net.clone());
        }
    }
    Ok(Phase1Output {
        net: snapshot.expect("stop_epoch validated to be within range"),
        preprocess,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{check::max_rel_grad_error, softmax};

    fn random_batch(n: usize, size: (usize, usize), seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Array4::zeros((n, 3, size.0, size.1));
        for v in x.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, 0.0..1.0);
        }
        x
    }

    #[test]
    fn head_width_tracks_device_count() {
        let net = build_signature_net(31, (32, 32), 0).unwrap();
        assert_eq!(net.fc_out.out_dim, 31);
        let net = build_signature_net(8, (32, 32), 0).unwrap();
        assert_eq!(net.fc_out.out_dim, 8);
    }

    #[test]
    fn signature_is_1024d_in_tanh_range_for_various_input_sizes() {
        for size in [(8, 8), (64, 64), (33, 47)] {
            let mut net = build_signature_net(2, size, 1).unwrap();
            let x = random_batch(2, size, 3);
            let trace = net.forward_train(&x);
            assert_eq!(trace.signatures.dim(), (2, SIGNATURE_DIM));
            let (sig_eval, _) = net.forward_eval(&x);
            assert_eq!(sig_eval.dim(), (2, SIGNATURE_DIM));
            assert!(sig_eval.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn zero_input_size_errors_with_block_index() {
        match build_signature_net(2, (0, 16), 0) {
            Err(Error::InputTooSmall { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected InputTooSmall, got {other:?}"),
        }
        assert!(build_signature_net(1, (16, 16), 0).is_err());
    }

    #[test]
    fn softmax_head_sums_to_one_on_random_weights() {
        let net = build_signature_net(5, (16, 16), 9).unwrap();
        let x = random_batch(3, (16, 16), 10);
        let (_, logits) = net.forward_eval(&x);
        let p = softmax(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn all_zero_image_yields_finite_signature() {
        let net = build_signature_net(2, (16, 16), 2).unwrap();
        let preprocess = Preprocess {
            input_size: (16, 16),
            channel_mean: [0.5; 3],
        };
        let ex = truncate(&net, &preprocess);
        let x = Array3::<f64>::zeros((3, 16, 16));
        let sig = ex.extract_array(&x);
        assert_eq!(sig.len(), SIGNATURE_DIM);
        assert!(sig.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn truncation_preserves_block5_outputs_and_hash() {
        let mut net = build_signature_net(3, (24, 24), 7).unwrap();
        let preprocess = Preprocess {
            input_size: (24, 24),
            channel_mean: [0.4, 0.5, 0.6],
        };
        let ex = truncate(&net, &preprocess);
        assert_eq!(ex.version, net.feature_hash(&preprocess));
        let x = random_batch(1, (24, 24), 8);
        let (sig_full, _) = net.forward_eval(&x);
        let sig_trunc = ex.extract_array(&x.index_axis(Axis(0), 0).to_owned());
        for (a, b) in sig_full.row(0).iter().zip(sig_trunc.iter()) {
            assert_eq!(a, b);
        }
        // training-path tap agrees too
        let trace = net.forward_train(&x);
        assert_eq!(trace.signatures.dim().1, SIGNATURE_DIM);
    }

    #[test]
    fn head_change_does_not_alter_extractor_version() {
        let mut net = build_signature_net(3, (16, 16), 4).unwrap();
        let preprocess = Preprocess {
            input_size: (16, 16),
            channel_mean: [0.5; 3],
        };
        let before = net.feature_hash(&preprocess);
        // poke a head weight: blocks 1-5 unchanged, hash unchanged
        *net.fc_out.weight.value.iter_mut().next().unwrap() += 1.0;
        assert_eq!(net.feature_hash(&preprocess), before);
        // poke a block-5 weight: hash must move
        *net.fc_sig.weight.value.iter_mut().next().unwrap() += 1.0;
        assert_ne!(net.feature_hash(&preprocess), before);
    }

    #[test]
    fn gradients_match_central_differences_on_toy_instance() {
        // 8x8 input, 2 devices, 1 sample
        let mut net = build_signature_net(2, (8, 8), 5).unwrap();
        let x = random_batch(1, (8, 8), 6);
        let labels = vec![1usize];
        let trace = net.forward_train(&x);
        let (_, probs) = softmax_xent_loss(&trace.logits, &labels);
        let dlogits = softmax_xent_backward(&probs, &labels);
        net.zero_grads();
        net.backward(&trace, &dlogits);
        let worst = max_rel_grad_error(
            &mut net,
            |n| {
                let t = n.forward_train(&x);
                softmax_xent_loss(&t.logits, &labels).0
            },
            4,
            1e-5,
            77,
        );
        assert!(worst <= 1e-3, "max relative gradient error {worst}");
    }
}
