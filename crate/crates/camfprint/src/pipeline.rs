//! End-to-end experiment orchestration: ingest -> phase-I training ->
//! signature extraction -> phase-II training -> threshold selection ->
//! similarity-matrix evaluation, with fixed artifact names under one
//! output directory so each stage finds its inputs.
//!
//! Artifacts: `manifest.json`, `phase1.ckpt`, `phase1_log.jsonl`,
//! `sigs.store`, `pairs.bin`, `phase2.ckpt`, `phase2_log.jsonl`,
//! `threshold.json`, `eval/report.json`, `eval/matrix.csv`,
//! `eval/heatmap.png`, plus the resolved `config.json`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_phase1, load_phase2, save_phase1, save_phase2};
use crate::data::{build_manifest, filter_min_images, stratified_split, Manifest, Split};
use crate::error::{Error, Result};
use crate::eval::{
    group_by_device, overall_accuracy, same_model_report, similarity_matrix, EvalConfig,
    EvalReport,
};
use crate::heatmap::render_heatmap;
use crate::signature::{
    build_signature_net, train_phase1, truncate, Phase1Config, Signature, SignatureExtractor,
};
use crate::similarity::{
    build_similarity_net, default_threshold_grid, make_pairs, score, select_threshold,
    train_phase2, write_pairs, Phase2Config, SignaturePair, SimilarityNetSpec,
    ThresholdArtifact,
};
use crate::store::SignatureStore;
use crate::synth::{generate_synthetic, SynthConfig};
use crate::train_log::write_jsonl;
use crate::util::mix_seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub n_pairs_per_cell: usize,
    pub grid: Vec<f64>,
    /// 0 derives the seed from the experiment master seed.
    pub seed: u64,
    /// Evaluate exits nonzero below this floor (CI gating).
    pub min_accuracy: Option<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_pairs_per_cell: 100,
            grid: default_threshold_grid(),
            seed: 0,
            min_accuracy: None,
        }
    }
}

/// One experiment, fully serializable; replaying a stored config on the
/// same inputs reproduces every artifact.
///
/// Stage seeds left at 0 (the default) are derived from `seed`, so one
/// master seed pins the whole pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub manifest_path: Option<PathBuf>,
    pub input_size: (usize, usize),
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    pub eval: EvalSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest_path: None,
            input_size: (256, 256),
            phase1: Phase1Config::default(),
            phase2: Phase2Config::default(),
            eval: EvalSettings::default(),
            output_dir: PathBuf::from("camfprint-out"),
            seed: 42,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(path, e))
    }

    pub fn manifest_file(&self) -> PathBuf {
        self.manifest_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("manifest.json"))
    }

    pub fn config_file(&self) -> PathBuf {
        self.output_dir.join("config.json")
    }

    pub fn phase1_ckpt(&self) -> PathBuf {
        self.output_dir.join("phase1.ckpt")
    }

    pub fn phase1_log(&self) -> PathBuf {
        self.output_dir.join("phase1_log.jsonl")
    }

    pub fn store_file(&self) -> PathBuf {
        self.output_dir.join("sigs.store")
    }

    pub fn pairs_file(&self) -> PathBuf {
        self.output_dir.join("pairs.bin")
    }

    pub fn phase2_ckpt(&self) -> PathBuf {
        self.output_dir.join("phase2.ckpt")
    }

    pub fn phase2_log(&self) -> PathBuf {
        self.output_dir.join("phase2_log.jsonl")
    }

    pub fn threshold_file(&self) -> PathBuf {
        self.output_dir.join("threshold.json")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.output_dir.join("eval")
    }

    pub fn split_seed(&self) -> u64 {
        mix_seed(self.seed, "split")
    }

    pub fn synth_seed(&self) -> u64 {
        mix_seed(self.seed, "synth")
    }

    pub fn resolved_phase1(&self) -> Phase1Config {
        let mut cfg = self.phase1.clone();
        if cfg.seed == 0 {
            cfg.seed = mix_seed(self.seed, "phase1");
        }
        cfg
    }

    pub fn resolved_phase2(&self) -> Phase2Config {
        let mut cfg = self.phase2.clone();
        if cfg.seed == 0 {
            cfg.seed = mix_seed(self.seed, "phase2");
        }
        cfg
    }

    pub fn eval_seed(&self) -> u64 {
        if self.eval.seed == 0 {
            mix_seed(self.seed, "eval")
        } else {
            self.eval.seed
        }
    }

    fn ensure_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| Error::io(&self.output_dir, e))
    }

    fn write_resolved_config(&self) -> Result<()> {
        self.save(&self.config_file())
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        })
    }
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        Err(Error::WouldRecompute(path.to_path_buf()))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum IngestSource {
    Dresden { root: PathBuf, min_images: usize },
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub devices: usize,
    pub records: usize,
    pub skipped: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub manifest_path: PathBuf,
}

pub fn run_ingest(
    cfg: &ExperimentConfig,
    source: &IngestSource,
    train_frac: f64,
    val_frac: f64,
) -> Result<IngestSummary> {
    cfg.ensure_output_dir()?;
    let (manifest, skipped) = match source {
        IngestSource::Dresden { root, min_images } => {
            let (m, skipped) = build_manifest(root)?;
            (filter_min_images(&m, *min_images)?, skipped)
        }
        IngestSource::Synthetic(synth) => {
            let mut synth = synth.clone();
            if synth.seed == 0 {
                synth.seed = cfg.synth_seed();
            }
            let dir = cfg.output_dir.join("synthetic");
            (generate_synthetic(&synth, &dir)?, 0)
        }
    };
    let manifest = stratified_split(&manifest, train_frac, val_frac, cfg.split_seed())?;
    let path = cfg.manifest_file();
    manifest.save(&path)?;
    cfg.write_resolved_config()?;
    Ok(IngestSummary {
        devices: manifest.devices.len(),
        records: manifest.records.len(),
        skipped,
        train: manifest.records_in(Split::Train).count(),
        val: manifest.records_in(Split::Val).count(),
        test: manifest.records_in(Split::Test).count(),
        manifest_path: path,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase1Summary {
    pub epochs: usize,
    pub stop_epoch: usize,
    pub final_train_loss: f64,
    pub final_val_acc: f64,
    pub stop_val_acc: f64,
    pub extractor_version: String,
}

pub fn run_phase1(cfg: &ExperimentConfig, force: bool) -> Result<Phase1Summary> {
    cfg.ensure_output_dir()?;
    require(&cfg.manifest_file(), "camfprint ingest")?;
    refuse_overwrite(&cfg.phase1_ckpt(), force)?;
    let manifest = Manifest::load(&cfg.manifest_file())?;
    let p1 = cfg.resolved_phase1();
    let net = build_signature_net(manifest.devices.len(), cfg.input_size, p1.seed)?;
    let out = train_phase1(net, &manifest, &p1)?;
    save_phase1(&cfg.phase1_ckpt(), &out.net, &out.preprocess)?;
    write_jsonl(&cfg.phase1_log(), &out.log)?;
    cfg.write_resolved_config()?;
    let last = out.log.last().unwrap();
    let stop = &out.log[p1.stop_epoch - 1];
    Ok(Phase1Summary {
        epochs: p1.epochs,
        stop_epoch: p1.stop_epoch,
        final_train_loss: last.train_loss,
        final_val_acc: last.val_acc,
        stop_val_acc: stop.val_acc,
        extractor_version: out.net.feature_hash(&out.preprocess).to_hex(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtractSummary {
    pub stored: usize,
    pub reused: usize,
    pub extractor_version: String,
}

fn load_extractor(cfg: &ExperimentConfig) -> Result<SignatureExtractor> {
    require(&cfg.phase1_ckpt(), "camfprint train --phase 1")?;
    let (net, preprocess) = load_phase1(&cfg.phase1_ckpt())?;
    Ok(truncate(&net, &preprocess))
}

/// Extracts a signature for every manifest record into the store, in
/// manifest order. Existing records under the same extractor version are
/// reused (puts are idempotent), so resuming is cheap.
pub fn run_extract(cfg: &ExperimentConfig, force: bool) -> Result<ExtractSummary> {
    cfg.ensure_output_dir()?;
    require(&cfg.manifest_file(), "camfprint ingest")?;
    let manifest = Manifest::load(&cfg.manifest_file())?;
    let extractor = load_extractor(cfg)?;
    let store_path = cfg.store_file();
    let mut store = if store_path.exists() && !force {
        SignatureStore::load(&store_path)?
    } else {
        SignatureStore::new()
    };
    let before = store.len();
    let mut reused = 0usize;
    for rec in &manifest.records {
        if store.get_by_path(&rec.path, extractor.version).is_some() {
            reused += 1;
            continue;
        }
        let sig = extractor.extract(&rec.path, &rec.device_id)?;
        store.put(&sig)?;
    }
    store.save(&store_path)?;
    Ok(ExtractSummary {
        stored: store.len() - before,
        reused,
        extractor_version: extractor.version.to_hex(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Phase2Summary {
    pub pairs: usize,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub final_val_f1: Option<f64>,
    pub eta: f64,
    pub selection_f1: f64,
    pub similarity_version: String,
}

/// Loads signatures for all train+val records, in manifest order, returning
/// them with their store ids and the record splits.
fn trainval_signatures(
    manifest: &Manifest,
    store: &SignatureStore,
    extractor: &SignatureExtractor,
) -> Result<(Vec<Signature>, Vec<u64>, Vec<Split>)> {
    let mut sigs = Vec::new();
    let mut ids = Vec::new();
    let mut splits = Vec::new();
    for rec in &manifest.records {
        if rec.split != Split::Train && rec.split != Split::Val {
            continue;
        }
        let stored = store
            .get_by_path(&rec.path, extractor.version)
            .ok_or_else(|| Error::MissingArtifact {
                path: PathBuf::from(&rec.path),
                hint: "camfprint extract".to_string(),
            })?;
        sigs.push(Signature {
            values: stored.values.clone(),
            image_path: stored.image_path.clone(),
            device_id: stored.device_id.clone(),
            version: stored.version,
        });
        ids.push(stored.sig_id);
        splits.push(rec.split);
    }
    Ok((sigs, ids, splits))
}

/// Validation pairs are those whose endpoints are both validation images;
/// everything else trains the network.
fn partition_pairs(
    pairs: &[SignaturePair],
    splits: &[Split],
) -> (Vec<SignaturePair>, Vec<SignaturePair>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for &p in pairs {
        if splits[p.a] == Split::Val && splits[p.b] == Split::Val {
            val.push(p);
        } else {
            train.push(p);
        }
    }
    (train, val)
}

pub fn run_phase2(cfg: &ExperimentConfig, force: bool) -> Result<Phase2Summary> {
    cfg.ensure_output_dir()?;
    require(&cfg.manifest_file(), "camfprint ingest")?;
    refuse_overwrite(&cfg.phase2_ckpt(), force)?;
    let extractor = load_extractor(cfg)?;
    if !cfg.store_file().exists() {
        run_extract(cfg, false)?;
    }
    let manifest = Manifest::load(&cfg.manifest_file())?;
    let store = SignatureStore::load(&cfg.store_file())?;
    let (sigs, ids, splits) = trainval_signatures(&manifest, &store, &extractor)?;
    let p2 = cfg.resolved_phase2();
    let pairs = make_pairs(&sigs, p2.pair_sampling, mix_seed(p2.seed, "pairs"))?;
    write_pairs(&cfg.pairs_file(), &pairs, &ids)?;
    let (train_pairs, val_pairs) = partition_pairs(&pairs, &splits);
    let net = build_similarity_net(&SimilarityNetSpec::default(), p2.seed);
    let out = train_phase2(net, &sigs, &train_pairs, &val_pairs, &p2)?;
    save_phase2(&cfg.phase2_ckpt(), &out.net)?;
    write_jsonl(&cfg.phase2_log(), &out.log)?;
    let threshold = select_threshold(&out.net, &sigs, &val_pairs, &cfg.eval.grid)?;
    let artifact = ThresholdArtifact {
        eta: threshold.eta,
        selection_f1: threshold.selection_f1,
        grid: cfg.eval.grid.clone(),
        extractor_version: extractor.version,
        similarity_version: out.net.weight_hash(),
    };
    artifact.save(&cfg.threshold_file())?;
    cfg.write_resolved_config()?;
    Ok(Phase2Summary {
        pairs: pairs.len(),
        train_pairs: train_pairs.len(),
        val_pairs: val_pairs.len(),
        final_val_f1: out.log.last().unwrap().val_f1,
        eta: threshold.eta,
        selection_f1: threshold.selection_f1,
        similarity_version: artifact.similarity_version.to_hex(),
    })
}

/// Evaluates the trained pipeline on the test split (Algorithm-1 matrix)
/// and writes `report.json`, `same_model.json`, `matrix.csv` and
/// `heatmap.png` under `eval/`.
pub fn run_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    require(&cfg.manifest_file(), "camfprint ingest")?;
    require(&cfg.store_file(), "camfprint extract")?;
    require(&cfg.phase2_ckpt(), "camfprint train --phase 2")?;
    require(&cfg.threshold_file(), "camfprint train --phase 2")?;
    let manifest = Manifest::load(&cfg.manifest_file())?;
    let store = SignatureStore::load(&cfg.store_file())?;
    let net = load_phase2(&cfg.phase2_ckpt())?;
    let threshold = ThresholdArtifact::load(&cfg.threshold_file())?;
    if net.weight_hash() != threshold.similarity_version {
        return Err(Error::VersionMismatch {
            a: net.weight_hash().to_hex(),
            b: threshold.similarity_version.to_hex(),
        });
    }
    let test_paths: HashMap<&str, &str> = manifest
        .records_in(Split::Test)
        .map(|r| (r.path.as_str(), r.device_id.as_str()))
        .collect();
    let test_sigs: Vec<Signature> = store
        .iter()
        .filter(|r| r.version == threshold.extractor_version && test_paths.contains_key(r.image_path.as_str()))
        .map(|r| Signature {
            values: r.values.clone(),
            image_path: r.image_path.clone(),
            device_id: r.device_id.clone(),
            version: r.version,
        })
        .collect();
    let refs: Vec<&Signature> = test_sigs.iter().collect();
    let per_device = group_by_device(&manifest.devices, &refs);
    let eval_cfg = EvalConfig {
        n_pairs_per_cell: cfg.eval.n_pairs_per_cell,
        eta: threshold.eta,
        seed: cfg.eval_seed(),
    };
    let matrix = similarity_matrix(&per_device, &net, &eval_cfg)?;
    let report = overall_accuracy(&matrix);
    let dir = cfg.eval_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    report.save(&dir.join("report.json"))?;
    let sm = same_model_report(&report);
    std::fs::write(
        dir.join("same_model.json"),
        serde_json::to_string_pretty(&sm)?,
    )
    .map_err(|e| Error::io(dir.join("same_model.json"), e))?;
    matrix.save_csv(&dir.join("matrix.csv"))?;
    render_heatmap(&matrix, &dir.join("heatmap.png"))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchResult {
    pub score: f64,
    pub eta: f64,
    pub same_device: bool,
    pub image_a: PathBuf,
    pub image_b: PathBuf,
}

/// Scores a pair of image files end to end: extract both signatures with
/// the trained extractor, score with the similarity network, compare
/// against the selected threshold (score >= eta reads as same device).
pub fn run_match(cfg: &ExperimentConfig, image_a: &Path, image_b: &Path) -> Result<MatchResult> {
    let extractor = load_extractor(cfg)?;
    require(&cfg.phase2_ckpt(), "camfprint train --phase 2")?;
    require(&cfg.threshold_file(), "camfprint train --phase 2")?;
    let net = load_phase2(&cfg.phase2_ckpt())?;
    let threshold = ThresholdArtifact::load(&cfg.threshold_file())?;
    if threshold.extractor_version != extractor.version {
        return Err(Error::VersionMismatch {
            a: extractor.version.to_hex(),
            b: threshold.extractor_version.to_hex(),
        });
    }
    let sig_a = extractor.extract(&image_a.to_string_lossy(), "query_a")?;
    let sig_b = extractor.extract(&image_b.to_string_lossy(), "query_b")?;
    let s = score(&net, &sig_a, &sig_b)?;
    Ok(MatchResult {
        score: s,
        eta: threshold.eta,
        same_device: s >= threshold.eta,
        image_a: image_a.to_path_buf(),
        image_b: image_b.to_path_buf(),
    })
}

/// Re-renders the heatmap from a stored evaluation report.
pub fn run_plot(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let report_path = cfg.eval_dir().join("report.json");
    require(&report_path, "camfprint evaluate")?;
    let report = EvalReport::load(&report_path)?;
    let out = cfg.eval_dir().join("heatmap.png");
    render_heatmap(&report.matrix, &out)?;
    Ok(out)
}
