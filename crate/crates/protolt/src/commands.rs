//! Command implementations behind the CLI binary.
//!
//! Every command validates its inputs, runs the corresponding library
//! operation, and writes its outputs plus a run manifest echoing the fully
//! resolved configuration, so a run can be reproduced from the manifest
//! alone. On failure all partially written outputs are removed. Exit
//! codes: 0 success, 2 validation, 3 I/O, 4 numerical failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::Error;
use crate::experiment::{self, AblationAxis};
use crate::format;
use crate::geometry::FeatureMatrix;
use crate::metrics::{self, MetricsReport};
use crate::pipeline::{self, MatchData, PrototypeInit, RecognizeData};
use crate::synth::{self, LongTailSpec};

pub const DATASET_MANIFEST: &str = "manifest.json";
pub const TRAIN_IMAGES: &str = "train_images.prto";
pub const TRAIN_LABELS: &str = "train_labels.prto";
pub const TRAIN_CANDIDATES: &str = "train_candidates.prto";
pub const TEST_IMAGES: &str = "test_images.prto";
pub const TEST_LABELS: &str = "test_labels.prto";
pub const ANCHORS: &str = "anchors.prto";

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const ENCODER_IMAGE: &str = "encoder_image.prto";
pub const ENCODER_TEXT: &str = "encoder_text.prto";
pub const PROTOTYPES: &str = "prototypes.prto";
pub const BANK_SIDECAR: &str = "bank.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const HEAD_WEIGHTS: &str = "head_weights.prto";
pub const HEAD_BIASES: &str = "head_biases.prto";
pub const HEAD_SIDECAR: &str = "head.json";
pub const REPORT_LINEAR: &str = "report_linear.json";
pub const REPORT_PROTOTYPE: &str = "report_prototype.json";
pub const REPORT_FUSED: &str = "report_fused.json";
pub const REPORTS_CSV: &str = "reports.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const EVAL_REPORT: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliErrorKind {
    Validation,
    Io,
    Numerical,
}

impl CliErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            CliErrorKind::Validation => 2,
            CliErrorKind::Io => 3,
            CliErrorKind::Numerical => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CliErrorKind::Validation => "validation",
            CliErrorKind::Io => "io",
            CliErrorKind::Numerical => "numerical",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: CliErrorKind,
    pub message: String,
}

impl CliError {
    /// Machine-readable form emitted on stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "kind": self.kind.as_str(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let kind = match &error {
            Error::Io { .. } | Error::Format { .. } => CliErrorKind::Io,
            Error::NonFinite { .. } => CliErrorKind::Numerical,
            _ => CliErrorKind::Validation,
        };
        CliError {
            kind,
            message: error.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Command-line overrides layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub no_filter: bool,
    pub proto_init: Option<PrototypeInit>,
    pub k_uniformity: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        if let Some(seed) = self.seed {
            cfg.data.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(alpha) = self.alpha {
            cfg.fusion.alpha = alpha;
        }
        if let Some(lambda) = self.lambda {
            cfg.train.loss.lambda = lambda;
        }
        if self.no_filter {
            cfg.train.filter_enabled = false;
        }
        if let Some(init) = self.proto_init {
            cfg.train.prototype_init = init;
        }
        if let Some(k) = self.k_uniformity {
            cfg.train.uniformity_k = k;
            cfg.metrics.uniformity_k = k;
        }
        cfg.validate()
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

/// Tracks files written into an output directory so a failed command can
/// remove its partial outputs.
struct OutputTracker {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputTracker {
    fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::from(Error::io(dir, e)))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        path
    }

    fn cleanup(&self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), Error> {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

fn run_manifest(
    command: &str,
    config: impl serde::Serialize,
    inputs: &[(&str, &Path)],
) -> serde_json::Value {
    let input_map: BTreeMap<String, String> = inputs
        .iter()
        .map(|(name, path)| (name.to_string(), path.display().to_string()))
        .collect();
    serde_json::json!({
        "command": command,
        "config": config,
        "inputs": input_map,
    })
}

fn with_cleanup<F>(out_dir: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut OutputTracker) -> CliResult<()>,
{
    let mut outputs = OutputTracker::new(out_dir)?;
    match body(&mut outputs) {
        Ok(()) => Ok(()),
        Err(error) => {
            outputs.cleanup();
            Err(error)
        }
    }
}

/// Dataset manifest: spec echo plus derived shapes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetManifest {
    pub spec: LongTailSpec,
    pub class_counts: Vec<usize>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub text_candidates: usize,
}

pub fn cmd_generate(config_path: &Path, out_dir: &Path, overrides: &Overrides) -> CliResult<()> {
    let cfg = load_config(config_path, overrides)?;
    with_cleanup(out_dir, |outputs| {
        let dataset = synth::generate(&cfg.data)?;
        let dim = cfg.data.dim_raw;
        format::write_embeddings(&outputs.path(TRAIN_IMAGES), &dataset.train_images, dim)?;
        format::write_labels(&outputs.path(TRAIN_LABELS), &dataset.train_labels)?;
        let flat = format::flatten_candidates(&dataset.train_candidates);
        format::write_embeddings(&outputs.path(TRAIN_CANDIDATES), &flat, dim)?;
        format::write_embeddings(&outputs.path(TEST_IMAGES), &dataset.test_images, dim)?;
        format::write_labels(&outputs.path(TEST_LABELS), &dataset.test_labels)?;
        let anchor_rows: Vec<Vec<f64>> = dataset
            .anchors
            .iter()
            .map(|r| r.as_slice().to_vec())
            .collect();
        format::write_embeddings(&outputs.path(ANCHORS), &anchor_rows, dim)?;
        format::write_json(
            &outputs.path(DATASET_MANIFEST),
            &DatasetManifest {
                spec: cfg.data.clone(),
                class_counts: dataset.class_counts.clone(),
                train_samples: dataset.train_images.len(),
                test_samples: dataset.test_images.len(),
                text_candidates: cfg.data.text_candidates,
            },
        )?;
        format::write_json(
            &outputs.path(RUN_MANIFEST),
            &run_manifest("generate", &cfg, &[("config", config_path)]),
        )?;
        Ok(())
    })
}

struct LoadedDataset {
    match_data: MatchData,
    recognize_data: RecognizeData,
}

fn load_dataset(dir: &Path) -> CliResult<LoadedDataset> {
    let manifest: DatasetManifest = format::read_json(&dir.join(DATASET_MANIFEST))?;
    let (train_images, _) = format::read_embeddings(&dir.join(TRAIN_IMAGES))?;
    let train_labels = format::read_labels(&dir.join(TRAIN_LABELS))?;
    let (candidate_rows, _) = format::read_embeddings(&dir.join(TRAIN_CANDIDATES))?;
    let candidates = format::unflatten_candidates(candidate_rows, manifest.text_candidates)?;
    let (test_images, _) = format::read_embeddings(&dir.join(TEST_IMAGES))?;
    let test_labels = format::read_labels(&dir.join(TEST_LABELS))?;
    let anchors_path = dir.join(ANCHORS);
    let anchors = if anchors_path.exists() {
        Some(format::read_embeddings(&anchors_path)?.0)
    } else {
        None
    };
    let match_data = MatchData {
        images: train_images.clone(),
        candidates,
        labels: train_labels.clone(),
        anchors,
    };
    let recognize_data = RecognizeData {
        train_images,
        train_labels,
        test_images,
        test_labels,
        class_counts: manifest.class_counts.clone(),
    };
    Ok(LoadedDataset {
        match_data,
        recognize_data,
    })
}

fn training_log_csv(log: &[pipeline::EpochStats]) -> String {
    let mut out = String::from("epoch,loss_total,loss_ccl,loss_pc,alignment,uniformity\n");
    for entry in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            entry.epoch,
            entry.loss_total,
            entry.loss_ccl,
            entry.loss_pc,
            entry.alignment,
            entry.uniformity
        ));
    }
    out
}

pub fn cmd_match(
    config_path: &Path,
    data_dir: &Path,
    out_dir: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    let cfg = load_config(config_path, overrides)?;
    let dataset = load_dataset(data_dir)?;
    with_cleanup(out_dir, |outputs| {
        let stage1 = pipeline::stage1_match(&dataset.match_data, &cfg.train)?;
        format::save_encoders(
            &stage1.encoders,
            &outputs.path(ENCODER_IMAGE),
            &outputs.path(ENCODER_TEXT),
        )?;
        format::save_bank(
            &stage1.bank,
            &outputs.path(PROTOTYPES),
            &outputs.path(BANK_SIDECAR),
        )?;
        outputs.write_text(TRAIN_LOG, &training_log_csv(&stage1.log))?;
        format::write_json(
            &outputs.path(RUN_MANIFEST),
            &run_manifest(
                "match",
                &cfg,
                &[("config", config_path), ("data", data_dir)],
            ),
        )?;
        Ok(())
    })
}

fn reports_csv(reports: &[(&str, &MetricsReport)]) -> String {
    let mut out = format!("classifier,{}\n", MetricsReport::csv_header());
    for (name, report) in reports {
        out.push_str(&format!("{name},{}\n", report.csv_row()));
    }
    out
}

pub fn cmd_recognize(
    config_path: &Path,
    data_dir: &Path,
    match_dir: &Path,
    out_dir: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    let cfg = load_config(config_path, overrides)?;
    let dataset = load_dataset(data_dir)?;
    let encoders = format::load_encoders(
        &match_dir.join(ENCODER_IMAGE),
        &match_dir.join(ENCODER_TEXT),
    )?;
    let bank = format::load_bank(&match_dir.join(PROTOTYPES), &match_dir.join(BANK_SIDECAR))?;
    with_cleanup(out_dir, |outputs| {
        let stage2 = pipeline::stage2_recognize(
            &encoders,
            &bank,
            &dataset.recognize_data,
            &cfg.recognize_config(),
        )?;
        format::save_head(
            &stage2.head,
            cfg.fusion.alpha,
            &outputs.path(HEAD_WEIGHTS),
            &outputs.path(HEAD_BIASES),
            &outputs.path(HEAD_SIDECAR),
        )?;
        format::write_json(&outputs.path(REPORT_LINEAR), &stage2.linear)?;
        format::write_json(&outputs.path(REPORT_PROTOTYPE), &stage2.prototype)?;
        format::write_json(&outputs.path(REPORT_FUSED), &stage2.fused)?;
        outputs.write_text(
            REPORTS_CSV,
            &reports_csv(&[
                ("linear", &stage2.linear),
                ("prototype", &stage2.prototype),
                ("fused", &stage2.fused),
            ]),
        )?;
        format::write_json(
            &outputs.path(RUN_MANIFEST),
            &run_manifest(
                "recognize",
                &cfg,
                &[
                    ("config", config_path),
                    ("data", data_dir),
                    ("match", match_dir),
                ],
            ),
        )?;
        Ok(())
    })
}

pub fn cmd_ablate(
    config_path: &Path,
    axis: &str,
    values: Option<&str>,
    out_dir: &Path,
    overrides: &Overrides,
) -> CliResult<()> {
    let cfg = load_config(config_path, overrides)?;
    let axis: AblationAxis = axis.parse()?;
    let values: Vec<String> = match values {
        Some(list) => list.split(',').map(|v| v.trim().to_string()).collect(),
        None => experiment::default_axis_values(axis),
    };
    with_cleanup(out_dir, |outputs| {
        let rows = experiment::run_ablation(axis, &values, &cfg)?;
        outputs.write_text(ABLATION_CSV, &experiment::ablation_csv(axis, &rows))?;
        format::write_json(
            &outputs.path(RUN_MANIFEST),
            &run_manifest(
                "ablate",
                serde_json::json!({
                    "axis": axis.to_string(),
                    "values": values,
                    "base": &cfg,
                }),
                &[("config", config_path)],
            ),
        )?;
        Ok(())
    })
}

pub struct EvalInputs<'a> {
    pub features: &'a Path,
    pub labels: &'a Path,
    /// Dataset directory providing train counts for the split accuracies.
    pub data_dir: Option<&'a Path>,
    /// Match directory providing a bank for prototype-head predictions.
    pub match_dir: Option<&'a Path>,
}

pub fn cmd_eval(inputs: &EvalInputs, out_dir: &Path, overrides: &Overrides) -> CliResult<()> {
    let k = overrides.k_uniformity.unwrap_or(10);
    let (rows, _) = format::read_embeddings(inputs.features)?;
    let labels = format::read_labels(inputs.labels)?;
    let features = FeatureMatrix::from_unnormalized(&rows)?;
    with_cleanup(out_dir, |outputs| {
        let alignment = metrics::alignment(&features, &labels).map_err(CliError::from)?;
        let uniformity =
            metrics::neighborhood_uniformity(&features, &labels, k).map_err(CliError::from)?;
        let mut report = MetricsReport {
            alignment,
            uniformity,
            uniformity_k: k,
            acc_all: None,
            acc_many: None,
            acc_medium: None,
            acc_few: None,
        };

        if let (Some(data_dir), Some(match_dir)) = (inputs.data_dir, inputs.match_dir) {
            let manifest: DatasetManifest =
                format::read_json(&data_dir.join(DATASET_MANIFEST))?;
            let bank =
                format::load_bank(&match_dir.join(PROTOTYPES), &match_dir.join(BANK_SIDECAR))?;
            let mut predictions = Vec::with_capacity(features.len());
            for z in features.iter() {
                let probs = crate::classifier::predict_prototype(&bank, z)?;
                predictions.push(crate::geometry::argmax_first(&probs));
            }
            let thresholds = crate::metrics::SplitThresholds::default();
            let accuracy = metrics::split_accuracy(
                &predictions,
                &labels,
                &manifest.class_counts,
                &thresholds,
            )?;
            report = report.with_accuracy(&accuracy);
        }

        format::write_json(&outputs.path(EVAL_REPORT), &report)?;
        format::write_json(
            &outputs.path(RUN_MANIFEST),
            &run_manifest(
                "eval",
                serde_json::json!({ "uniformity_k": k }),
                &[("features", inputs.features), ("labels", inputs.labels)],
            ),
        )?;
        Ok(())
    })
}
