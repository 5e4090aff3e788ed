//! Recognition-stage heads.
//!
//! Three predictors over a frozen embedding: a learnable linear head
//! trained with cross-entropy, a prototype head that softmaxes the
//! similarities to the class prototypes, and their α-blend. The linear
//! head inherits the training distribution's head-class bias; the
//! prototype head does not, and the blend trades the two off.

use rand::seq::SliceRandom;

use crate::bank::PrototypeBank;
use crate::error::{Error, Result};
use crate::geometry::{self, FeatureMatrix, UnitVector};
use crate::rng;

/// Weights and biases of the learnable linear classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl LinearHead {
    /// All-zero head for `classes` classes over `dim`-dimensional features.
    pub fn zeros(classes: usize, dim: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::EmptyInput);
        }
        if dim < 2 {
            return Err(Error::InvalidDimension { got: dim });
        }
        Ok(Self {
            weights: vec![vec![0.0; dim]; classes],
            biases: vec![0.0; classes],
        })
    }

    pub fn from_parts(weights: Vec<Vec<f64>>, biases: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if weights.len() != biases.len() {
            return Err(Error::CountMismatch {
                expected: weights.len(),
                got: biases.len(),
            });
        }
        let dim = weights[0].len();
        for row in &weights {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
        }
        let finite = weights
            .iter()
            .flatten()
            .chain(biases.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                context: "linear head parameters".into(),
            });
        }
        Ok(Self { weights, biases })
    }

    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

/// Blend weight α between the prototype head (α) and linear head (1 − α).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub alpha: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { alpha: 0.8 }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Softmax over the affine logits `w_i · z + b_i`, temperature 1.
pub fn predict_linear(head: &LinearHead, z: &UnitVector) -> Result<Vec<f64>> {
    if z.dim() != head.dim() {
        return Err(Error::DimensionMismatch {
            left: head.dim(),
            right: z.dim(),
        });
    }
    let logits: Vec<f64> = head
        .weights
        .iter()
        .zip(&head.biases)
        .map(|(w, b)| geometry::dot(w, z.as_slice()) + b)
        .collect();
    geometry::softmax(&logits, 1.0)
}

/// Softmax over prototype similarities `z · c_j`, temperature 1.
pub fn predict_prototype(bank: &PrototypeBank, z: &UnitVector) -> Result<Vec<f64>> {
    if z.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            left: bank.dim(),
            right: z.dim(),
        });
    }
    let scores: Vec<f64> = bank
        .prototypes()
        .iter()
        .map(|proto| geometry::dot(proto.as_slice(), z.as_slice()))
        .collect();
    geometry::softmax(&scores, 1.0)
}

/// Elementwise blend `α·P_prototype + (1 − α)·P_linear`.
pub fn predict_fused(
    head: &LinearHead,
    bank: &PrototypeBank,
    cfg: &FusionConfig,
    z: &UnitVector,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if head.classes() != bank.class_count() {
        return Err(Error::CountMismatch {
            expected: bank.class_count(),
            got: head.classes(),
        });
    }
    let proto = predict_prototype(bank, z)?;
    let linear = predict_linear(head, z)?;
    Ok(proto
        .iter()
        .zip(&linear)
        .map(|(p, l)| cfg.alpha * p + (1.0 - cfg.alpha) * l)
        .collect())
}

/// Optimizer settings for the linear head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTrainConfig {
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::EmptyInput);
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
        Ok(())
    }
}

/// A trained head plus the mean cross-entropy over the training set at the
/// final parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    pub head: LinearHead,
    pub final_loss: f64,
}

/// Trains the linear head with mini-batch gradient descent on mean
/// cross-entropy. Zero-initialized and deterministic per seed; zero epochs
/// returns the zero head untouched.
pub fn train_linear(
    features: &FeatureMatrix,
    labels: &[usize],
    cfg: &HeadTrainConfig,
) -> Result<TrainedHead> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    for label in labels {
        if *label >= cfg.classes {
            return Err(Error::ClassOutOfRange {
                class: *label,
                classes: cfg.classes,
            });
        }
    }

    let dim = features.dim();
    let mut head = LinearHead::zeros(cfg.classes, dim)?;
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut shuffler = rng::stream(cfg.seed, "head-shuffle");

    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffler);
        for chunk in order.chunks(cfg.batch_size) {
            let scale = 1.0 / chunk.len() as f64;
            let mut grad_w = vec![vec![0.0; dim]; cfg.classes];
            let mut grad_b = vec![0.0; cfg.classes];
            for &i in chunk {
                let z = features.row(i);
                let probs = predict_linear(&head, z)?;
                for class in 0..cfg.classes {
                    let target = if class == labels[i] { 1.0 } else { 0.0 };
                    let coeff = scale * (probs[class] - target);
                    grad_b[class] += coeff;
                    for (g, component) in grad_w[class].iter_mut().zip(z.as_slice()) {
                        *g += coeff * component;
                    }
                }
            }
            for class in 0..cfg.classes {
                head.biases[class] -= cfg.learning_rate * grad_b[class];
                for (w, g) in head.weights[class].iter_mut().zip(&grad_w[class]) {
                    *w -= cfg.learning_rate * g;
                }
            }
        }
    }

    let mut final_loss = 0.0;
    for (i, label) in labels.iter().enumerate() {
        let probs = predict_linear(&head, features.row(i))?;
        final_loss -= probs[*label].max(f64::MIN_POSITIVE).ln();
    }
    final_loss /= labels.len() as f64;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite {
            context: "linear head training loss".into(),
        });
    }
    Ok(TrainedHead { head, final_loss })
}
