//! Device-level camera fingerprint matching.
//!
//! Decides whether two images were captured by the same physical camera.
//! A device-classification CNN is trained on labeled images, truncated at
//! its 1024-unit dense layer into a signature extractor, and a Siamese
//! similarity head is trained on labeled signature pairs to score
//! same-device likelihood. Evaluation builds the per-device-pair
//! similarity matrix from binarized scores.
//!
//! The pipeline runs in two phases:
//!
//! 1. [`signature::train_phase1`] fits the classifier; [`signature::truncate`]
//!    keeps blocks 1-5 as the extractor `f_sig` with `S = f_sig(I)`.
//! 2. [`similarity::train_phase2`] fits `f_sim` on signature pairs labeled
//!    by device identity; `score = f_sim(f_sig(I1), f_sig(I2))` with the
//!    operating threshold chosen by validation F1.
//!
//! Start from [`pipeline`] for the orchestrated flow (also exposed by the
//! `camfprint` binary), or from the runnable programs in `examples/`:
//! every major capability has one. Lacking a labeled multi-camera corpus,
//! [`synth`] generates a desk-scale dataset with per-device sensor noise
//! where ground truth is known by construction.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod heatmap;
pub mod nn;
pub mod pipeline;
pub mod signature;
pub mod similarity;
pub mod store;
pub mod synth;
pub mod train_log;
pub mod util;

pub use error::{Error, Result};

pub use data::{build_manifest, filter_min_images, stratified_split, ImageRecord, Manifest, Split};
pub use eval::{overall_accuracy, same_model_report, similarity_matrix, EvalConfig, EvalReport};
pub use pipeline::ExperimentConfig;
pub use signature::{
    build_signature_net, train_phase1, truncate, Phase1Config, Signature, SignatureExtractor,
    SignatureNet, SIGNATURE_DIM,
};
pub use similarity::{
    build_similarity_net, make_pairs, score, select_threshold, train_phase2, PairSampling,
    Phase2Config, SignaturePair, SimilarityNet, SimilarityNetSpec, Threshold,
};
pub use store::{SignatureStore, StoreRecord};
pub use synth::{generate_synthetic, SynthConfig};
pub use util::VersionHash;
