//! The two-stage training procedure at desk scale.
//!
//! Stage 1 trains one linear map per modality (outputs renormalized to the
//! sphere) with the total matching loss, EMA prototype updates after every
//! batch, and optional candidate-text filtering. Stage 2 freezes the
//! encoders and bank, trains the linear head on the embedded training set,
//! and evaluates the linear, prototype, and fused classifiers on the
//! balanced test set. Gradients flow by closed-form chain rule through the
//! linear maps, the normalizations, and the filter blend.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::bank::PrototypeBank;
use crate::classifier::{self, FusionConfig, HeadTrainConfig, LinearHead};
use crate::error::{Error, Result};
use crate::filter::{self, TextCandidateSet};
use crate::geometry::{self, FeatureMatrix, UnitVector};
use crate::loss::{self, LabeledBatch, LossConfig, LossValueWithGrads};
use crate::metrics::{self, MetricsReport, SplitThresholds};
use crate::rng;
use crate::synth::SyntheticDataset;

/// How the prototype bank is seeded before stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrototypeInit {
    /// Prototypes start at the text-encoded class anchor directions.
    Anchored,
    /// Prototypes start at uniform random points on the sphere.
    Random,
}

impl std::str::FromStr for PrototypeInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchored" => Ok(Self::Anchored),
            "random" => Ok(Self::Random),
            other => Err(Error::InvalidArgument(format!(
                "unknown prototype init '{other}', expected 'anchored' or 'random'"
            ))),
        }
    }
}

impl std::fmt::Display for PrototypeInit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Anchored => write!(f, "anchored"),
            Self::Random => write!(f, "random"),
        }
    }
}

/// Stage-1 training settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Embedding dimension d produced by the encoders.
    pub embed_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossConfig,
    /// EMA momentum for prototype updates.
    pub momentum: f64,
    pub filter_enabled: bool,
    pub prototype_init: PrototypeInit,
    /// k used for the uniformity column of the training log.
    pub uniformity_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.1,
            loss: LossConfig::default(),
            momentum: 0.999,
            filter_enabled: true,
            prototype_init: PrototypeInit::Anchored,
            uniformity_k: 10,
            seed: 17,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::InvalidDimension { got: self.embed_dim });
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must be in [0, 1], got {}",
                self.momentum
            )));
        }
        if self.uniformity_k == 0 {
            return Err(Error::InvalidArgument(
                "uniformity_k must be positive".into(),
            ));
        }
        self.loss.validate()
    }
}

/// The toy encoders: one linear map per modality, outputs renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    image_map: Vec<Vec<f64>>,
    text_map: Vec<Vec<f64>>,
}

impl EncoderParams {
    /// Gaussian init scaled by 1/√D, separate streams per modality.
    pub fn init_random(embed_dim: usize, raw_dim: usize, seed: u64) -> Result<Self> {
        if embed_dim < 2 {
            return Err(Error::InvalidDimension { got: embed_dim });
        }
        if raw_dim < 2 {
            return Err(Error::InvalidDimension { got: raw_dim });
        }
        let scale = 1.0 / (raw_dim as f64).sqrt();
        let draw = |tag: &str| -> Vec<Vec<f64>> {
            let mut generator = rng::stream(seed, tag);
            (0..embed_dim)
                .map(|_| {
                    (0..raw_dim)
                        .map(|_| {
                            let noise: f64 = StandardNormal.sample(&mut generator);
                            scale * noise
                        })
                        .collect()
                })
                .collect()
        };
        Ok(Self {
            image_map: draw("encoder-image"),
            text_map: draw("encoder-text"),
        })
    }

    pub fn from_parts(image_map: Vec<Vec<f64>>, text_map: Vec<Vec<f64>>) -> Result<Self> {
        for map in [&image_map, &text_map] {
            if map.len() < 2 {
                return Err(Error::InvalidDimension { got: map.len() });
            }
            let raw_dim = map[0].len();
            if raw_dim < 2 {
                return Err(Error::InvalidDimension { got: raw_dim });
            }
            for row in map.iter() {
                if row.len() != raw_dim {
                    return Err(Error::DimensionMismatch {
                        left: raw_dim,
                        right: row.len(),
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "encoder parameters".into(),
                    });
                }
            }
        }
        if image_map.len() != text_map.len() || image_map[0].len() != text_map[0].len() {
            return Err(Error::DimensionMismatch {
                left: image_map.len(),
                right: text_map.len(),
            });
        }
        Ok(Self {
            image_map,
            text_map,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.image_map.len()
    }

    pub fn raw_dim(&self) -> usize {
        self.image_map[0].len()
    }

    pub fn image_map(&self) -> &[Vec<f64>] {
        &self.image_map
    }

    pub fn text_map(&self) -> &[Vec<f64>] {
        &self.text_map
    }

    pub fn encode_image(&self, raw: &[f64]) -> Result<UnitVector> {
        Ok(encode_with_norm(&self.image_map, raw)?.z)
    }

    pub fn encode_text(&self, raw: &[f64]) -> Result<UnitVector> {
        Ok(encode_with_norm(&self.text_map, raw)?.z)
    }
}

/// Embedding together with the pre-normalization magnitude ‖Wx‖, kept for
/// the backward pass.
#[derive(Debug, Clone)]
struct Encoded {
    z: UnitVector,
    norm: f64,
}

fn encode_with_norm(map: &[Vec<f64>], raw: &[f64]) -> Result<Encoded> {
    if map[0].len() != raw.len() {
        return Err(Error::DimensionMismatch {
            left: map[0].len(),
            right: raw.len(),
        });
    }
    let projected: Vec<f64> = map.iter().map(|row| geometry::dot(row, raw)).collect();
    let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z = geometry::normalize(&projected)?;
    Ok(Encoded { z, norm })
}

/// One sample's text feature with everything the backward pass needs.
struct TextFeature {
    z: UnitVector,
    blend_norm: f64,
    weights: Vec<f64>,
    candidates: Vec<Encoded>,
    /// Weights came from the prototype filter (so they depend on the
    /// candidates and contribute their own gradient term).
    filtered: bool,
}

fn featurize_text(
    encoders: &EncoderParams,
    bank: &PrototypeBank,
    candidates: &[Vec<f64>],
    label: usize,
    filter_enabled: bool,
) -> Result<TextFeature> {
    let encoded: Vec<Encoded> = candidates
        .iter()
        .map(|raw| encode_with_norm(&encoders.text_map, raw))
        .collect::<Result<_>>()?;
    let count = encoded.len();
    if count == 1 {
        return Ok(TextFeature {
            z: encoded[0].z.clone(),
            blend_norm: 1.0,
            weights: vec![1.0],
            candidates: encoded,
            filtered: false,
        });
    }

    let weights = if filter_enabled {
        let rows = FeatureMatrix::from_rows(encoded.iter().map(|e| e.z.clone()).collect())?;
        let set = TextCandidateSet::new(rows, label)?;
        filter::filter_weights(&set, bank)?
    } else {
        vec![1.0 / count as f64; count]
    };

    let dim = encoded[0].z.dim();
    let mut blend = vec![0.0; dim];
    for (weight, candidate) in weights.iter().zip(&encoded) {
        for (acc, component) in blend.iter_mut().zip(candidate.z.as_slice()) {
            *acc += weight * component;
        }
    }
    let blend_norm = blend.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z = geometry::normalize(&blend)?;
    Ok(TextFeature {
        z,
        blend_norm,
        weights,
        candidates: encoded,
        filtered: filter_enabled,
    })
}

/// Adjoint of `z = y/‖y‖`: maps dL/dz to dL/dy.
fn normalize_backward(grad_z: &[f64], z: &[f64], norm: f64) -> Vec<f64> {
    let radial = geometry::dot(grad_z, z);
    grad_z
        .iter()
        .zip(z)
        .map(|(g, component)| (g - radial * component) / norm)
        .collect()
}

fn accumulate_outer(grad_map: &mut [Vec<f64>], grad_projected: &[f64], raw: &[f64]) {
    for (row, g) in grad_map.iter_mut().zip(grad_projected) {
        if *g != 0.0 {
            for (cell, x) in row.iter_mut().zip(raw) {
                *cell += g * x;
            }
        }
    }
}

/// Backpropagates a text-feature gradient onto the text map.
fn text_backward(
    feature: &TextFeature,
    grad_feature: &[f64],
    prototype: &[f64],
    raw_candidates: &[Vec<f64>],
    grad_text_map: &mut [Vec<f64>],
) {
    if feature.candidates.len() == 1 {
        let candidate = &feature.candidates[0];
        let grad_projected =
            normalize_backward(grad_feature, candidate.z.as_slice(), candidate.norm);
        accumulate_outer(grad_text_map, &grad_projected, &raw_candidates[0]);
        return;
    }

    let grad_blend = normalize_backward(grad_feature, feature.z.as_slice(), feature.blend_norm);
    // Mean of grad_blend over the blended directions, for the softmax term.
    let blended_mean: f64 = feature
        .weights
        .iter()
        .zip(&feature.candidates)
        .map(|(w, c)| w * geometry::dot(&grad_blend, c.z.as_slice()))
        .sum();

    for ((weight, candidate), raw) in feature
        .weights
        .iter()
        .zip(&feature.candidates)
        .zip(raw_candidates)
    {
        let mut grad_candidate: Vec<f64> = grad_blend.iter().map(|g| weight * g).collect();
        if feature.filtered {
            let swing =
                weight * (geometry::dot(&grad_blend, candidate.z.as_slice()) - blended_mean);
            for (g, p) in grad_candidate.iter_mut().zip(prototype) {
                *g += swing * p;
            }
        }
        let grad_projected =
            normalize_backward(&grad_candidate, candidate.z.as_slice(), candidate.norm);
        accumulate_outer(grad_text_map, &grad_projected, raw);
    }
}

/// Raw stage-1 inputs: one image vector, M candidate text vectors, and a
/// label per sample, plus the class anchor directions when available.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchData {
    pub images: Vec<Vec<f64>>,
    pub candidates: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
    pub anchors: Option<Vec<Vec<f64>>>,
}

impl MatchData {
    pub fn from_synthetic(data: &SyntheticDataset) -> Self {
        Self {
            images: data.train_images.clone(),
            candidates: data.train_candidates.clone(),
            labels: data.train_labels.clone(),
            anchors: Some(
                data.anchors
                    .iter()
                    .map(|row| row.as_slice().to_vec())
                    .collect(),
            ),
        }
    }

    /// Returns (class count, raw dimension) after consistency checks.
    fn validate(&self) -> Result<(usize, usize)> {
        if self.images.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.images.len() != self.labels.len() {
            return Err(Error::LengthMismatch {
                left: self.images.len(),
                right: self.labels.len(),
            });
        }
        if self.images.len() != self.candidates.len() {
            return Err(Error::LengthMismatch {
                left: self.images.len(),
                right: self.candidates.len(),
            });
        }
        let raw_dim = self.images[0].len();
        for image in &self.images {
            if image.len() != raw_dim {
                return Err(Error::DimensionMismatch {
                    left: raw_dim,
                    right: image.len(),
                });
            }
        }
        for sample in &self.candidates {
            if sample.is_empty() {
                return Err(Error::EmptyInput);
            }
            for candidate in sample {
                if candidate.len() != raw_dim {
                    return Err(Error::DimensionMismatch {
                        left: raw_dim,
                        right: candidate.len(),
                    });
                }
            }
        }
        let classes = self.labels.iter().max().unwrap() + 1;
        if let Some(anchors) = &self.anchors {
            if anchors.len() != classes {
                return Err(Error::CountMismatch {
                    expected: classes,
                    got: anchors.len(),
                });
            }
            for anchor in anchors {
                if anchor.len() != raw_dim {
                    return Err(Error::DimensionMismatch {
                        left: raw_dim,
                        right: anchor.len(),
                    });
                }
            }
        }
        Ok((classes, raw_dim))
    }
}

/// Per-epoch training log record.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_ccl: f64,
    pub loss_pc: f64,
    pub alignment: f64,
    pub uniformity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Output {
    pub encoders: EncoderParams,
    pub bank: PrototypeBank,
    pub log: Vec<EpochStats>,
}

/// Class frequencies π from the training label histogram.
pub fn label_frequencies(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; classes];
    for label in labels {
        counts[*label] += 1.0;
    }
    let total = labels.len() as f64;
    counts.iter().map(|c| c / total).collect()
}

pub fn stage1_match(data: &MatchData, cfg: &TrainConfig) -> Result<Stage1Output> {
    cfg.validate()?;
    let (classes, raw_dim) = data.validate()?;
    let samples = data.images.len();
    let frequencies = label_frequencies(&data.labels, classes);

    let mut encoders = EncoderParams::init_random(cfg.embed_dim, raw_dim, cfg.seed)?;
    let mut bank = match cfg.prototype_init {
        PrototypeInit::Anchored => {
            let anchors = data.anchors.as_ref().ok_or_else(|| {
                Error::InvalidArgument(
                    "anchored prototype init requires anchor directions".into(),
                )
            })?;
            let encoded: Vec<Vec<f64>> = anchors
                .iter()
                .map(|anchor| Ok(encoders.encode_text(anchor)?.into_vec()))
                .collect::<Result<_>>()?;
            PrototypeBank::from_anchors(&encoded, &frequencies, cfg.momentum)?
        }
        PrototypeInit::Random => PrototypeBank::random(
            cfg.embed_dim,
            classes,
            &frequencies,
            cfg.momentum,
            rng::derive_seed(cfg.seed, "prototype-init"),
        )?,
    };

    let mut shuffler = rng::stream(cfg.seed, "batch-shuffle");
    let mut order: Vec<usize> = (0..samples).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffler);
        let mut sum_total = 0.0;
        let mut sum_ccl = 0.0;
        let mut sum_pc = 0.0;

        for chunk in order.chunks(cfg.batch_size) {
            let (batch, image_encoded, text_features) =
                forward_batch(&encoders, &bank, data, chunk, cfg.filter_enabled)?;
            let ccl = loss::category_contrastive_loss(&batch, &cfg.loss)?;
            let pc = loss::prototype_contrastive_loss(&batch, &bank, &cfg.loss)?;
            let total_value = ccl.value + cfg.loss.lambda * pc.value;
            if !total_value.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("total loss at epoch {epoch}"),
                });
            }
            sum_total += total_value * chunk.len() as f64;
            sum_ccl += ccl.value * chunk.len() as f64;
            sum_pc += pc.value * chunk.len() as f64;

            let (grad_image_map, grad_text_map) = backward_batch(
                &encoders, &bank, data, chunk, &image_encoded, &text_features, &ccl, &pc,
                cfg.loss.lambda,
            );
            apply_step(&mut encoders.image_map, &grad_image_map, cfg.learning_rate);
            apply_step(&mut encoders.text_map, &grad_text_map, cfg.learning_rate);

            // EMA moves prototypes toward the post-step features of this batch.
            let (rebatch, _, _) =
                forward_batch(&encoders, &bank, data, chunk, cfg.filter_enabled)?;
            bank.batch_ema_update(&rebatch)?;
        }

        let features = encode_image_features(&encoders, &data.images)?;
        let alignment = metrics::alignment(&features, &data.labels)?;
        let uniformity =
            metrics::neighborhood_uniformity(&features, &data.labels, cfg.uniformity_k)?;
        log.push(EpochStats {
            epoch,
            loss_total: sum_total / samples as f64,
            loss_ccl: sum_ccl / samples as f64,
            loss_pc: sum_pc / samples as f64,
            alignment,
            uniformity,
        });
    }

    Ok(Stage1Output {
        encoders,
        bank,
        log,
    })
}

type ForwardPass = (LabeledBatch, Vec<Encoded>, Vec<TextFeature>);

fn forward_batch(
    encoders: &EncoderParams,
    bank: &PrototypeBank,
    data: &MatchData,
    indices: &[usize],
    filter_enabled: bool,
) -> Result<ForwardPass> {
    let mut image_encoded = Vec::with_capacity(indices.len());
    let mut text_features = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        image_encoded.push(encode_with_norm(&encoders.image_map, &data.images[i])?);
        text_features.push(featurize_text(
            encoders,
            bank,
            &data.candidates[i],
            data.labels[i],
            filter_enabled,
        )?);
        labels.push(data.labels[i]);
    }
    let images = FeatureMatrix::from_rows(image_encoded.iter().map(|e| e.z.clone()).collect())?;
    let texts = FeatureMatrix::from_rows(text_features.iter().map(|t| t.z.clone()).collect())?;
    let batch = LabeledBatch::new(images, texts, labels)?;
    Ok((batch, image_encoded, text_features))
}

#[allow(clippy::too_many_arguments)]
fn backward_batch(
    encoders: &EncoderParams,
    bank: &PrototypeBank,
    data: &MatchData,
    indices: &[usize],
    image_encoded: &[Encoded],
    text_features: &[TextFeature],
    ccl: &LossValueWithGrads,
    pc: &LossValueWithGrads,
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let embed_dim = encoders.embed_dim();
    let raw_dim = encoders.raw_dim();
    let mut grad_image_map = vec![vec![0.0; raw_dim]; embed_dim];
    let mut grad_text_map = vec![vec![0.0; raw_dim]; embed_dim];

    for (position, &sample) in indices.iter().enumerate() {
        let grad_z: Vec<f64> = ccl.grad_image[position]
            .iter()
            .zip(&pc.grad_image[position])
            .map(|(c, p)| c + lambda * p)
            .collect();
        let encoded = &image_encoded[position];
        let grad_projected = normalize_backward(&grad_z, encoded.z.as_slice(), encoded.norm);
        accumulate_outer(&mut grad_image_map, &grad_projected, &data.images[sample]);

        let grad_z: Vec<f64> = ccl.grad_text[position]
            .iter()
            .zip(&pc.grad_text[position])
            .map(|(c, p)| c + lambda * p)
            .collect();
        let prototype = bank
            .prototypes()
            .row(data.labels[sample])
            .as_slice();
        text_backward(
            &text_features[position],
            &grad_z,
            prototype,
            &data.candidates[sample],
            &mut grad_text_map,
        );
    }
    (grad_image_map, grad_text_map)
}

fn apply_step(map: &mut [Vec<f64>], grad: &[Vec<f64>], learning_rate: f64) {
    for (row, grad_row) in map.iter_mut().zip(grad) {
        for (w, g) in row.iter_mut().zip(grad_row) {
            *w -= learning_rate * g;
        }
    }
}

/// Encodes raw image vectors into a unit-row feature matrix.
pub fn encode_image_features(
    encoders: &EncoderParams,
    images: &[Vec<f64>],
) -> Result<FeatureMatrix> {
    let rows = images
        .iter()
        .map(|raw| encoders.encode_image(raw))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(rows)
}

/// Stage-2 settings: head optimizer, fusion weight, and evaluation knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizeConfig {
    pub head_epochs: usize,
    pub head_batch_size: usize,
    pub head_learning_rate: f64,
    pub fusion: FusionConfig,
    pub thresholds: SplitThresholds,
    pub uniformity_k: usize,
    pub seed: u64,
}

impl Default for RecognizeConfig {
    fn default() -> Self {
        Self {
            head_epochs: 40,
            head_batch_size: 32,
            head_learning_rate: 0.5,
            fusion: FusionConfig::default(),
            thresholds: SplitThresholds::default(),
            uniformity_k: 10,
            seed: 17,
        }
    }
}

/// Frozen-embedding recognition inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RecognizeData {
    pub train_images: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub test_images: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
    pub class_counts: Vec<usize>,
}

impl RecognizeData {
    pub fn from_synthetic(data: &SyntheticDataset) -> Self {
        Self {
            train_images: data.train_images.clone(),
            train_labels: data.train_labels.clone(),
            test_images: data.test_images.clone(),
            test_labels: data.test_labels.clone(),
            class_counts: data.class_counts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Output {
    pub head: LinearHead,
    pub head_final_loss: f64,
    pub linear: MetricsReport,
    pub prototype: MetricsReport,
    pub fused: MetricsReport,
}

pub fn stage2_recognize(
    encoders: &EncoderParams,
    bank: &PrototypeBank,
    data: &RecognizeData,
    cfg: &RecognizeConfig,
) -> Result<Stage2Output> {
    cfg.fusion.validate()?;
    cfg.thresholds.validate()?;
    let classes = bank.class_count();
    if data.class_counts.len() != classes {
        return Err(Error::CountMismatch {
            expected: classes,
            got: data.class_counts.len(),
        });
    }

    let train_features = encode_image_features(encoders, &data.train_images)?;
    let trained = classifier::train_linear(
        &train_features,
        &data.train_labels,
        &HeadTrainConfig {
            classes,
            epochs: cfg.head_epochs,
            batch_size: cfg.head_batch_size,
            learning_rate: cfg.head_learning_rate,
            seed: rng::derive_seed(cfg.seed, "head-train"),
        },
    )?;

    let test_features = encode_image_features(encoders, &data.test_images)?;
    let alignment = metrics::alignment(&test_features, &data.test_labels)?;
    let uniformity =
        metrics::neighborhood_uniformity(&test_features, &data.test_labels, cfg.uniformity_k)?;
    let base_report = MetricsReport {
        alignment,
        uniformity,
        uniformity_k: cfg.uniformity_k,
        acc_all: None,
        acc_many: None,
        acc_medium: None,
        acc_few: None,
    };

    let mut linear_preds = Vec::with_capacity(test_features.len());
    let mut proto_preds = Vec::with_capacity(test_features.len());
    let mut fused_preds = Vec::with_capacity(test_features.len());
    for z in test_features.iter() {
        linear_preds.push(geometry::argmax_first(&classifier::predict_linear(
            &trained.head,
            z,
        )?));
        proto_preds.push(geometry::argmax_first(&classifier::predict_prototype(
            bank, z,
        )?));
        fused_preds.push(geometry::argmax_first(&classifier::predict_fused(
            &trained.head,
            bank,
            &cfg.fusion,
            z,
        )?));
    }

    let accuracy = |preds: &[usize]| {
        metrics::split_accuracy(preds, &data.test_labels, &data.class_counts, &cfg.thresholds)
    };
    let linear = base_report.clone().with_accuracy(&accuracy(&linear_preds)?);
    let prototype = base_report.clone().with_accuracy(&accuracy(&proto_preds)?);
    let fused = base_report.with_accuracy(&accuracy(&fused_preds)?);

    Ok(Stage2Output {
        head: trained.head,
        head_final_loss: trained.final_loss,
        linear,
        prototype,
        fused,
    })
}
