//! Versioned weight checkpoints.
//!
//! A checkpoint is a JSON metadata blob plus named f64 tensors, all
//! little-endian, closed by a SHA-256 of everything before it:
//!
//! ```text
//! magic "CFPCKPT1" | meta_len: u64 | meta JSON
//! n_tensors: u64
//! n x { name_len: u32 | name | ndim: u32 | dims: u64... | data: f64... }
//! sha256 trailer (32 bytes)
//! ```
//!
//! f64 bit patterns pass through untouched, so save/load round-trips are
//! exact and the trailer hash doubles as a content version.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::signature::{build_signature_net, Preprocess, SignatureNet};
use crate::similarity::{build_similarity_net, SimilarityNet, SimilarityNetSpec};

const MAGIC: &[u8; 8] = b"CFPCKPT1";

pub struct TensorContainer {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl TensorContainer {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        buf.extend_from_slice(&meta);
        buf.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |reason: &str| Error::CheckpointCorrupt {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < MAGIC.len() + 8 + 32 || &bytes[..8] != MAGIC {
            return Err(corrupt("missing checkpoint header"));
        }
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        if digest.as_slice() != &bytes[body_len..] {
            return Err(corrupt("content hash mismatch"));
        }
        let mut at = 8;
        let mut take = |n: usize| -> Result<&[u8]> {
            if at + n > body_len {
                return Err(Error::CheckpointCorrupt {
                    path: path.to_path_buf(),
                    reason: "truncated".into(),
                });
            }
            let s = &bytes[at..at + n];
            at += n;
            Ok(s)
        };
        let meta_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let meta: serde_json::Value = serde_json::from_slice(take(meta_len)?)?;
        let n_tensors = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(name_len)?)
                .map_err(|_| corrupt("tensor name is not UTF-8"))?
                .to_string();
            let ndim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
            }
            let len: usize = dims.iter().product();
            let raw = take(len * 8)?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = ArrayD::from_shape_vec(IxDyn(&dims), data)
                .map_err(|_| corrupt("tensor shape/data mismatch"))?;
            tensors.push((name, t));
        }
        Ok(TensorContainer { meta, tensors })
    }

    fn tensor(&self, name: &str, path: &Path) -> Result<&ArrayD<f64>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::CheckpointCorrupt {
                path: path.to_path_buf(),
                reason: format!("missing tensor {name}"),
            })
    }
}

fn arr1_to_dyn(a: &ndarray::Array1<f64>) -> ArrayD<f64> {
    a.clone().into_dyn()
}

/// Serializes the full signature network plus its preprocessing constants.
pub fn save_phase1(path: &Path, net: &SignatureNet, preprocess: &Preprocess) -> Result<()> {
    let mut tensors = Vec::new();
    for (i, (conv, bn)) in net.convs.iter().zip(&net.bns).enumerate() {
        let b = i + 1;
        tensors.push((format!("conv{b}.weight"), conv.weight.value.clone()));
        tensors.push((format!("conv{b}.bias"), conv.bias.value.clone()));
        tensors.push((format!("bn{b}.gamma"), bn.gamma.value.clone()));
        tensors.push((format!("bn{b}.beta"), bn.beta.value.clone()));
        tensors.push((format!("bn{b}.running_mean"), arr1_to_dyn(&bn.running_mean)));
        tensors.push((format!("bn{b}.running_var"), arr1_to_dyn(&bn.running_var)));
    }
    for (name, dense) in [
        ("fc_sig", &net.fc_sig),
        ("fc_hidden", &net.fc_hidden),
        ("fc_out", &net.fc_out),
    ] {
        tensors.push((format!("{name}.weight"), dense.weight.value.clone()));
        tensors.push((format!("{name}.bias"), dense.bias.value.clone()));
    }
    TensorContainer {
        meta: json!({
            "kind": "signature",
            "input_size": [net.input_size.0, net.input_size.1],
            "num_devices": net.num_devices,
            "channel_mean": preprocess.channel_mean,
        }),
        tensors,
    }
    .save(path)
}

pub fn load_phase1(path: &Path) -> Result<(SignatureNet, Preprocess)> {
    let c = TensorContainer::load(path)?;
    let corrupt = |reason: &str| Error::CheckpointCorrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if c.meta["kind"] != "signature" {
        return Err(corrupt("not a signature checkpoint"));
    }
    let input_size = (
        c.meta["input_size"][0].as_u64().ok_or_else(|| corrupt("bad input_size"))? as usize,
        c.meta["input_size"][1].as_u64().ok_or_else(|| corrupt("bad input_size"))? as usize,
    );
    let num_devices =
        c.meta["num_devices"].as_u64().ok_or_else(|| corrupt("bad num_devices"))? as usize;
    let mut channel_mean = [0.0; 3];
    for (i, m) in channel_mean.iter_mut().enumerate() {
        *m = c.meta["channel_mean"][i]
            .as_f64()
            .ok_or_else(|| corrupt("bad channel_mean"))?;
    }
    let mut net = build_signature_net(num_devices, input_size, 0)?;
    let assign = |dst: &mut ArrayD<f64>, src: &ArrayD<f64>, name: &str| -> Result<()> {
        if dst.shape() != src.shape() {
            return Err(Error::CheckpointCorrupt {
                path: path.to_path_buf(),
                reason: format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                ),
            });
        }
        dst.assign(src);
        Ok(())
    };
    for i in 0..4 {
        let b = i + 1;
        assign(
            &mut net.convs[i].weight.value,
            c.tensor(&format!("conv{b}.weight"), path)?,
            "conv.weight",
        )?;
        assign(
            &mut net.convs[i].bias.value,
            c.tensor(&format!("conv{b}.bias"), path)?,
            "conv.bias",
        )?;
        assign(
            &mut net.bns[i].gamma.value,
            c.tensor(&format!("bn{b}.gamma"), path)?,
            "bn.gamma",
        )?;
        assign(
            &mut net.bns[i].beta.value,
            c.tensor(&format!("bn{b}.beta"), path)?,
            "bn.beta",
        )?;
        let rm = c.tensor(&format!("bn{b}.running_mean"), path)?;
        let rv = c.tensor(&format!("bn{b}.running_var"), path)?;
        net.bns[i].running_mean = rm
            .clone()
            .into_dimensionality()
            .map_err(|_| corrupt("running_mean rank"))?;
        net.bns[i].running_var = rv
            .clone()
            .into_dimensionality()
            .map_err(|_| corrupt("running_var rank"))?;
    }
    for (name, dense) in [
        ("fc_sig", &mut net.fc_sig),
        ("fc_hidden", &mut net.fc_hidden),
        ("fc_out", &mut net.fc_out),
    ] {
        assign(
            &mut dense.weight.value,
            c.tensor(&format!("{name}.weight"), path)?,
            "dense.weight",
        )?;
        assign(
            &mut dense.bias.value,
            c.tensor(&format!("{name}.bias"), path)?,
            "dense.bias",
        )?;
    }
    Ok((
        net,
        Preprocess {
            input_size,
            channel_mean,
        },
    ))
}

pub fn save_phase2(path: &Path, net: &SimilarityNet) -> Result<()> {
    let tensors = vec![
        ("fc1.weight".to_string(), net.fc1.weight.value.clone()),
        ("fc1.bias".to_string(), net.fc1.bias.value.clone()),
        ("fc2.weight".to_string(), net.fc2.weight.value.clone()),
        ("fc2.bias".to_string(), net.fc2.bias.value.clone()),
        ("head.weight".to_string(), net.head.weight.value.clone()),
        ("head.bias".to_string(), net.head.bias.value.clone()),
    ];
    TensorContainer {
        meta: json!({
            "kind": "similarity",
            "spec": {
                "sig_dim": net.spec.sig_dim,
                "fc1_units": net.spec.fc1_units,
                "hidden_units": net.spec.hidden_units,
            },
        }),
        tensors,
    }
    .save(path)
}

pub fn load_phase2(path: &Path) -> Result<SimilarityNet> {
    let c = TensorContainer::load(path)?;
    let corrupt = |reason: &str| Error::CheckpointCorrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if c.meta["kind"] != "similarity" {
        return Err(corrupt("not a similarity checkpoint"));
    }
    let spec = SimilarityNetSpec {
        sig_dim: c.meta["spec"]["sig_dim"].as_u64().ok_or_else(|| corrupt("bad spec"))? as usize,
        fc1_units: c.meta["spec"]["fc1_units"].as_u64().ok_or_else(|| corrupt("bad spec"))?
            as usize,
        hidden_units: c.meta["spec"]["hidden_units"]
            .as_u64()
            .ok_or_else(|| corrupt("bad spec"))? as usize,
    };
    let mut net = build_similarity_net(&spec, 0);
    for (name, param) in [
        ("fc1.weight", &mut net.fc1.weight),
        ("fc1.bias", &mut net.fc1.bias),
        ("fc2.weight", &mut net.fc2.weight),
        ("fc2.bias", &mut net.fc2.bias),
        ("head.weight", &mut net.head.weight),
        ("head.bias", &mut net.head.bias),
    ] {
        let src = c.tensor(name, path)?;
        if src.shape() != param.value.shape() {
            return Err(corrupt(&format!("tensor {name} shape mismatch")));
        }
        param.value.assign(src);
    }
    Ok(net)
}
