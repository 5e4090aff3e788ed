//! Matching-stage objectives and their analytic gradients.
//!
//! Two losses drive the image-text matching stage: a prototype contrastive
//! loss that pulls each sample's image and text features toward its own
//! class prototype and away from all others, and a category-level
//! contrastive loss over image-text pairs within the batch whose positive
//! sets contain every same-class partner. Gradients flow to the features
//! only; prototypes move exclusively through EMA updates. A central
//! finite-difference harness verifies the closed forms.

use crate::bank::PrototypeBank;
use crate::error::{Error, Result};
use crate::geometry::{dot, log_sum_exp, FeatureMatrix};

/// Temperature and prototype-loss weight.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Softmax temperature τ shared by both losses.
    pub tau: f64,
    /// Weight λ on the prototype contrastive term in the total loss.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            lambda: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::NonPositiveTemperature { got: self.tau });
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Paired image features, text features, and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    images: FeatureMatrix,
    texts: FeatureMatrix,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(images: FeatureMatrix, texts: FeatureMatrix, labels: Vec<usize>) -> Result<Self> {
        if images.len() != texts.len() {
            return Err(Error::CountMismatch {
                expected: images.len(),
                got: texts.len(),
            });
        }
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                expected: images.len(),
                got: labels.len(),
            });
        }
        if !images.is_empty() && images.dim() != texts.dim() {
            return Err(Error::DimensionMismatch {
                left: images.dim(),
                right: texts.dim(),
            });
        }
        Ok(Self {
            images,
            texts,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.dim()
    }

    pub fn images(&self) -> &FeatureMatrix {
        &self.images
    }

    pub fn texts(&self) -> &FeatureMatrix {
        &self.texts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// A scalar loss with gradients matching the batch shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValueWithGrads {
    pub value: f64,
    pub grad_image: Vec<Vec<f64>>,
    pub grad_text: Vec<Vec<f64>>,
}

impl LossValueWithGrads {
    fn zeros(samples: usize, dim: usize) -> Self {
        Self {
            value: 0.0,
            grad_image: vec![vec![0.0; dim]; samples],
            grad_text: vec![vec![0.0; dim]; samples],
        }
    }
}

/// Prototype contrastive loss: batch mean of the per-sample cross-entropy
/// of the temperature-scaled softmax over prototype similarities, for the
/// image and the text feature of each sample.
pub fn prototype_contrastive_loss(
    batch: &LabeledBatch,
    bank: &PrototypeBank,
    cfg: &LossConfig,
) -> Result<LossValueWithGrads> {
    cfg.validate()?;
    validate_against_bank(batch, bank)?;
    Ok(prototype_contrastive_kernel(
        &batch.images.raw_rows(),
        &batch.texts.raw_rows(),
        &batch.labels,
        &bank.prototypes().raw_rows(),
        cfg.tau,
    ))
}

/// Category-level contrastive loss: every image scores against all texts in
/// the batch (and symmetrically), with all same-class partners positive.
pub fn category_contrastive_loss(
    batch: &LabeledBatch,
    cfg: &LossConfig,
) -> Result<LossValueWithGrads> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(category_contrastive_kernel(
        &batch.images.raw_rows(),
        &batch.texts.raw_rows(),
        &batch.labels,
        cfg.tau,
    ))
}

/// Total loss: category term plus λ times the prototype term.
///
/// With λ = 0 the category-loss result is returned as is, so the two are
/// bit-identical in that configuration.
pub fn total_loss(
    batch: &LabeledBatch,
    bank: &PrototypeBank,
    cfg: &LossConfig,
) -> Result<LossValueWithGrads> {
    let ccl = category_contrastive_loss(batch, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(ccl);
    }
    let pc = prototype_contrastive_loss(batch, bank, cfg)?;
    Ok(combine(ccl, pc, cfg.lambda))
}

fn combine(base: LossValueWithGrads, extra: LossValueWithGrads, weight: f64) -> LossValueWithGrads {
    let mut out = base;
    out.value += weight * extra.value;
    for (row, other) in out.grad_image.iter_mut().zip(&extra.grad_image) {
        for (g, e) in row.iter_mut().zip(other) {
            *g += weight * e;
        }
    }
    for (row, other) in out.grad_text.iter_mut().zip(&extra.grad_text) {
        for (g, e) in row.iter_mut().zip(other) {
            *g += weight * e;
        }
    }
    out
}

fn validate_against_bank(batch: &LabeledBatch, bank: &PrototypeBank) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            left: batch.dim(),
            right: bank.dim(),
        });
    }
    let classes = bank.class_count();
    for label in batch.labels() {
        if *label >= classes {
            return Err(Error::ClassOutOfRange {
                class: *label,
                classes,
            });
        }
    }
    Ok(())
}

/// Raw-slice kernel for the prototype loss. Does not assume unit rows, so
/// the finite-difference harness can evaluate it at perturbed points.
pub(crate) fn prototype_contrastive_kernel(
    images: &[&[f64]],
    texts: &[&[f64]],
    labels: &[usize],
    prototypes: &[&[f64]],
    tau: f64,
) -> LossValueWithGrads {
    let samples = labels.len();
    let dim = prototypes[0].len();
    let classes = prototypes.len();
    let mut out = LossValueWithGrads::zeros(samples, dim);
    let inv_n = 1.0 / samples as f64;

    let mut scores = vec![0.0; classes];
    for i in 0..samples {
        for (feature, grad) in [
            (images[i], &mut out.grad_image[i]),
            (texts[i], &mut out.grad_text[i]),
        ] {
            for (j, proto) in prototypes.iter().enumerate() {
                scores[j] = dot(feature, proto) / tau;
            }
            out.value += inv_n * (log_sum_exp(&scores) - scores[labels[i]]);
            let probs = stable_softmax(&scores);
            for (j, proto) in prototypes.iter().enumerate() {
                let target = if j == labels[i] { 1.0 } else { 0.0 };
                let coeff = inv_n * (probs[j] - target) / tau;
                if coeff != 0.0 {
                    for (g, p) in grad.iter_mut().zip(*proto) {
                        *g += coeff * p;
                    }
                }
            }
        }
    }
    out
}

/// Raw-slice kernel for the category-level contrastive loss.
pub(crate) fn category_contrastive_kernel(
    images: &[&[f64]],
    texts: &[&[f64]],
    labels: &[usize],
    tau: f64,
) -> LossValueWithGrads {
    let samples = labels.len();
    let dim = images[0].len();
    let mut out = LossValueWithGrads::zeros(samples, dim);
    let inv_n = 1.0 / samples as f64;

    // scores[i][j] = image_i · text_j / τ
    let scores: Vec<Vec<f64>> = images
        .iter()
        .map(|img| texts.iter().map(|txt| dot(img, txt) / tau).collect())
        .collect();
    let positives: Vec<Vec<usize>> = labels
        .iter()
        .map(|label| {
            labels
                .iter()
                .enumerate()
                .filter(|(_, l)| *l == label)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let mut column = vec![0.0; samples];
    for i in 0..samples {
        let pos = &positives[i];
        let inv_pos = 1.0 / pos.len() as f64;

        // Image anchor i against every text.
        let row = &scores[i];
        let lse = log_sum_exp(row);
        let mean_pos: f64 = pos.iter().map(|j| row[*j]).sum::<f64>() * inv_pos;
        out.value += inv_n * (lse - mean_pos);
        let probs = stable_softmax(row);
        for k in 0..samples {
            let pos_share = if labels[k] == labels[i] { inv_pos } else { 0.0 };
            let coeff = inv_n * (probs[k] - pos_share) / tau;
            for ((gi, gt), (img, txt)) in out.grad_image[i]
                .iter_mut()
                .zip(out.grad_text[k].iter_mut())
                .zip(images[i].iter().zip(texts[k]))
            {
                *gi += coeff * txt;
                *gt += coeff * img;
            }
        }

        // Text anchor i against every image.
        for (k, row) in scores.iter().enumerate() {
            column[k] = row[i];
        }
        let lse = log_sum_exp(&column);
        let mean_pos: f64 = pos.iter().map(|j| column[*j]).sum::<f64>() * inv_pos;
        out.value += inv_n * (lse - mean_pos);
        let probs = stable_softmax(&column);
        for k in 0..samples {
            let pos_share = if labels[k] == labels[i] { inv_pos } else { 0.0 };
            let coeff = inv_n * (probs[k] - pos_share) / tau;
            for ((gt, gi), (txt, img)) in out.grad_text[i]
                .iter_mut()
                .zip(out.grad_image[k].iter_mut())
                .zip(texts[i].iter().zip(images[k]))
            {
                *gt += coeff * img;
                *gi += coeff * txt;
            }
        }
    }
    out
}

pub(crate) fn total_kernel(
    images: &[&[f64]],
    texts: &[&[f64]],
    labels: &[usize],
    prototypes: &[&[f64]],
    cfg: &LossConfig,
) -> LossValueWithGrads {
    let ccl = category_contrastive_kernel(images, texts, labels, cfg.tau);
    if cfg.lambda == 0.0 {
        return ccl;
    }
    let pc = prototype_contrastive_kernel(images, texts, labels, prototypes, cfg.tau);
    combine(ccl, pc, cfg.lambda)
}

fn stable_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Compares the analytic total-loss gradients against central finite
/// differences of step `h` at every coordinate of every feature, and
/// returns the worst relative error (denominator clamped at 1e-8).
pub fn check_gradients(
    batch: &LabeledBatch,
    bank: &PrototypeBank,
    cfg: &LossConfig,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be in (0, 1e-2], got {step}"
        )));
    }
    cfg.validate()?;
    validate_against_bank(batch, bank)?;

    let mut images: Vec<Vec<f64>> = batch.images.iter().map(|r| r.as_slice().to_vec()).collect();
    let mut texts: Vec<Vec<f64>> = batch.texts.iter().map(|r| r.as_slice().to_vec()).collect();
    let labels = batch.labels.clone();
    let protos: Vec<Vec<f64>> = bank
        .prototypes()
        .iter()
        .map(|r| r.as_slice().to_vec())
        .collect();

    let eval = |images: &[Vec<f64>], texts: &[Vec<f64>]| -> f64 {
        let img_refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
        let txt_refs: Vec<&[f64]> = texts.iter().map(Vec::as_slice).collect();
        let proto_refs: Vec<&[f64]> = protos.iter().map(Vec::as_slice).collect();
        total_kernel(&img_refs, &txt_refs, &labels, &proto_refs, cfg).value
    };

    let analytic = {
        let img_refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
        let txt_refs: Vec<&[f64]> = texts.iter().map(Vec::as_slice).collect();
        let proto_refs: Vec<&[f64]> = protos.iter().map(Vec::as_slice).collect();
        total_kernel(&img_refs, &txt_refs, &labels, &proto_refs, cfg)
    };

    let mut worst: f64 = 0.0;
    let dim = batch.dim();
    for sample in 0..batch.len() {
        for coord in 0..dim {
            let original = images[sample][coord];
            images[sample][coord] = original + step;
            let plus = eval(&images, &texts);
            images[sample][coord] = original - step;
            let minus = eval(&images, &texts);
            images[sample][coord] = original;
            worst = worst.max(relative_error(
                analytic.grad_image[sample][coord],
                (plus - minus) / (2.0 * step),
            ));

            let original = texts[sample][coord];
            texts[sample][coord] = original + step;
            let plus = eval(&images, &texts);
            texts[sample][coord] = original - step;
            let minus = eval(&images, &texts);
            texts[sample][coord] = original;
            worst = worst.max(relative_error(
                analytic.grad_text[sample][coord],
                (plus - minus) / (2.0 * step),
            ));
        }
    }
    Ok(worst)
}

fn relative_error(expected: f64, numeric: f64) -> f64 {
    let denom = expected.abs().max(numeric.abs()).max(1e-8);
    (expected - numeric).abs() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    fn matrix(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_unnormalized(rows).unwrap()
    }

    fn random_batch(samples: usize, dim: usize, classes: usize, seed: u64) -> LabeledBatch {
        let images = sample_uniform_sphere(dim, samples, seed).unwrap();
        let texts = sample_uniform_sphere(dim, samples, seed ^ 0x5a5a).unwrap();
        let labels: Vec<usize> = (0..samples).map(|i| (i * 7 + 3) % classes).collect();
        LabeledBatch::new(images, texts, labels).unwrap()
    }

    fn random_bank(dim: usize, classes: usize, seed: u64) -> PrototypeBank {
        let freqs = vec![1.0; classes];
        PrototypeBank::random(dim, classes, &freqs, 0.999, seed).unwrap()
    }

    #[test]
    fn prototype_loss_single_class_is_exactly_zero() {
        let bank = random_bank(4, 1, 5);
        let batch = random_batch(6, 4, 1, 8);
        let cfg = LossConfig { tau: 0.07, lambda: 0.5 };
        let out = prototype_contrastive_loss(&batch, &bank, &cfg).unwrap();
        assert_eq!(out.value, 0.0);
        for row in out.grad_image.iter().chain(&out.grad_text) {
            assert!(row.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn prototype_loss_hand_evaluated() {
        // τ=1, orthogonal prototypes, image=text=prototype 0, label 0:
        // each modality contributes ln(1 + e^{-1}).
        let bank =
            PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0], 0.999)
                .unwrap();
        let batch = LabeledBatch::new(
            matrix(&[vec![1.0, 0.0]]),
            matrix(&[vec![1.0, 0.0]]),
            vec![0],
        )
        .unwrap();
        let cfg = LossConfig { tau: 1.0, lambda: 0.5 };
        let out = prototype_contrastive_loss(&batch, &bank, &cfg).unwrap();
        let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - 0.626523).abs() < 1e-6);
    }

    #[test]
    fn category_loss_single_pair_is_exactly_zero() {
        let batch = random_batch(1, 4, 1, 77);
        let cfg = LossConfig::default();
        let out = category_contrastive_loss(&batch, &cfg).unwrap();
        assert_eq!(out.value, 0.0);
        for row in out.grad_image.iter().chain(&out.grad_text) {
            assert!(row.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn category_loss_two_pairs_hand_evaluated() {
        let batch = LabeledBatch::new(
            matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            vec![0, 1],
        )
        .unwrap();
        let cfg = LossConfig { tau: 1.0, lambda: 0.0 };
        let out = category_contrastive_loss(&batch, &cfg).unwrap();
        let expected = 2.0 * (1.0 + (-1.0f64).exp()).ln();
        assert!((out.value - expected).abs() < 1e-12);
        assert!((out.value - 0.626523).abs() < 1e-6);
    }

    #[test]
    fn total_loss_lambda_zero_is_bitwise_category_loss() {
        let bank = random_bank(16, 20, 2);
        let batch = random_batch(8, 16, 20, 3);
        let cfg = LossConfig { tau: 0.07, lambda: 0.0 };
        let total = total_loss(&batch, &bank, &cfg).unwrap();
        let ccl = category_contrastive_loss(&batch, &cfg).unwrap();
        assert_eq!(total.value.to_bits(), ccl.value.to_bits());
        for (a, b) in total.grad_image.iter().zip(&ccl.grad_image) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn total_loss_is_linear_combination() {
        let bank = random_bank(16, 20, 2);
        let batch = random_batch(8, 16, 20, 3);
        let cfg = LossConfig { tau: 0.07, lambda: 0.5 };
        let total = total_loss(&batch, &bank, &cfg).unwrap();
        let ccl = category_contrastive_loss(&batch, &cfg).unwrap();
        let pc = prototype_contrastive_loss(&batch, &bank, &cfg).unwrap();
        assert!((total.value - (ccl.value + 0.5 * pc.value)).abs() < 1e-12);
        for i in 0..batch.len() {
            for c in 0..batch.dim() {
                let want = ccl.grad_image[i][c] + 0.5 * pc.grad_image[i][c];
                assert!((total.grad_image[i][c] - want).abs() < 1e-12);
                let want = ccl.grad_text[i][c] + 0.5 * pc.grad_text[i][c];
                assert!((total.grad_text[i][c] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn losses_are_nonnegative_and_permutation_invariant() {
        let bank = random_bank(8, 5, 21);
        let batch = random_batch(6, 8, 5, 22);
        let cfg = LossConfig { tau: 0.2, lambda: 0.7 };
        let base = total_loss(&batch, &bank, &cfg).unwrap();
        assert!(base.value >= 0.0);

        // Reverse the batch order; value unchanged, gradients permuted.
        let perm: Vec<usize> = (0..batch.len()).rev().collect();
        let images = FeatureMatrix::from_rows(
            perm.iter().map(|i| batch.images().row(*i).clone()).collect(),
        )
        .unwrap();
        let texts = FeatureMatrix::from_rows(
            perm.iter().map(|i| batch.texts().row(*i).clone()).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = perm.iter().map(|i| batch.labels()[*i]).collect();
        let permuted = LabeledBatch::new(images, texts, labels).unwrap();
        let out = total_loss(&permuted, &bank, &cfg).unwrap();
        assert!((out.value - base.value).abs() < 1e-12);
        for (new_pos, old_pos) in perm.iter().enumerate() {
            for c in 0..batch.dim() {
                assert!((out.grad_image[new_pos][c] - base.grad_image[*old_pos][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relabeling_classes_preserves_values() {
        let batch = random_batch(6, 8, 4, 31);
        let freqs = vec![1.0; 4];
        let bank = PrototypeBank::random(8, 4, &freqs, 0.999, 32).unwrap();
        let cfg = LossConfig { tau: 0.1, lambda: 0.5 };
        let base = total_loss(&batch, &bank, &cfg).unwrap();

        // Permute class ids consistently in labels and bank order.
        let perm = [2usize, 0, 3, 1]; // old class -> new class
        let mut new_rows = vec![vec![0.0; 8]; 4];
        let mut new_freqs = vec![0.0; 4];
        for old in 0..4 {
            new_rows[perm[old]] = bank.prototype(old).unwrap().as_slice().to_vec();
            new_freqs[perm[old]] = bank.frequencies()[old];
        }
        let relabeled_bank = PrototypeBank::from_anchors(&new_rows, &new_freqs, 0.999).unwrap();
        let relabeled = LabeledBatch::new(
            batch.images().clone(),
            batch.texts().clone(),
            batch.labels().iter().map(|l| perm[*l]).collect(),
        )
        .unwrap();
        let out = total_loss(&relabeled, &relabeled_bank, &cfg).unwrap();
        assert!((out.value - base.value).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let bank = random_bank(16, 20, 40);
        let batch = random_batch(8, 16, 20, 41);
        let cfg = LossConfig { tau: 0.07, lambda: 0.5 };
        let err = check_gradients(&batch, &bank, &cfg, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_at_constant_loss_point_is_zero() {
        // A single pair with λ=0 has identically zero loss, so both the
        // analytic and numeric gradients vanish.
        let bank = random_bank(4, 1, 50);
        let batch = random_batch(1, 4, 1, 51);
        let cfg = LossConfig { tau: 0.07, lambda: 0.0 };
        let err = check_gradients(&batch, &bank, &cfg, 1e-5).unwrap();
        assert!(err < 1e-6, "expected ~0 error, got {err}");
    }

    #[test]
    fn gradient_check_rejects_bad_step() {
        let bank = random_bank(4, 2, 60);
        let batch = random_batch(2, 4, 2, 61);
        let cfg = LossConfig::default();
        assert!(check_gradients(&batch, &bank, &cfg, 0.0).is_err());
        assert!(check_gradients(&batch, &bank, &cfg, 0.5).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let bank = random_bank(4, 2, 70);
        let batch = LabeledBatch::new(
            FeatureMatrix::empty(4).unwrap(),
            FeatureMatrix::empty(4).unwrap(),
            vec![],
        )
        .unwrap();
        let cfg = LossConfig::default();
        assert!(matches!(
            category_contrastive_loss(&batch, &cfg),
            Err(Error::EmptyBatch)
        ));
        assert!(matches!(
            prototype_contrastive_loss(&batch, &bank, &cfg),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn label_out_of_bank_range_rejected() {
        let bank = random_bank(4, 2, 80);
        let batch = random_batch(3, 4, 3, 81);
        let cfg = LossConfig::default();
        assert!(matches!(
            prototype_contrastive_loss(&batch, &bank, &cfg),
            Err(Error::ClassOutOfRange { .. })
        ));
    }
}
