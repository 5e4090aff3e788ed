//! Embedding-space quality metrics and split accuracy.
//!
//! Alignment is the mean intra-class pairwise distance (lower is tighter);
//! neighborhood uniformity is the mean distance from each class center to
//! its k nearest other centers (higher is better separated). Accuracy is
//! reported overall and restricted to the many/medium/few class splits
//! defined by training-set counts.

use crate::error::{Error, Result};
use crate::geometry::{self, FeatureMatrix};

/// Class-count boundaries for the many/medium/few splits.
///
/// Many: train count strictly above `many_min`. Few: strictly below
/// `few_max`. Medium: inclusive in between.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitThresholds {
    pub many_min: usize,
    pub few_max: usize,
}

impl Default for SplitThresholds {
    fn default() -> Self {
        Self {
            many_min: 100,
            few_max: 20,
        }
    }
}

impl SplitThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.few_max > self.many_min {
            return Err(Error::InvalidArgument(format!(
                "few_max ({}) must not exceed many_min ({})",
                self.few_max, self.many_min
            )));
        }
        Ok(())
    }
}

/// Accuracy overall and per split; splits with no test samples are absent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitAccuracy {
    pub all: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub many: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub few: Option<f64>,
}

/// One evaluation: alignment, uniformity at the recorded k, and accuracy.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsReport {
    pub alignment: f64,
    pub uniformity: f64,
    pub uniformity_k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_all: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_many: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_medium: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_few: Option<f64>,
}

impl MetricsReport {
    pub fn with_accuracy(mut self, accuracy: &SplitAccuracy) -> Self {
        self.acc_all = Some(accuracy.all);
        self.acc_many = accuracy.many;
        self.acc_medium = accuracy.medium;
        self.acc_few = accuracy.few;
        self
    }

    /// Column order shared by every CSV this crate writes.
    pub fn csv_header() -> &'static str {
        "acc_all,acc_many,acc_med,acc_few,alignment,uniformity"
    }

    pub fn csv_row(&self) -> String {
        fn cell(value: Option<f64>) -> String {
            value.map(|v| format!("{v:.6}")).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{:.6},{:.6}",
            cell(self.acc_all),
            cell(self.acc_many),
            cell(self.acc_medium),
            cell(self.acc_few),
            self.alignment,
            self.uniformity
        )
    }
}

/// Distinct classes declared by a label array: every id in `0..=max`.
/// Errors with `EmptyClass` when an id in that range has no samples.
fn class_members(labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = labels.iter().max().unwrap() + 1;
    let mut members = vec![Vec::new(); classes];
    for (index, label) in labels.iter().enumerate() {
        members[*label].push(index);
    }
    for (class, ids) in members.iter().enumerate() {
        if ids.is_empty() {
            return Err(Error::EmptyClass { class });
        }
    }
    Ok(members)
}

fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean over classes of the mean pairwise distance between same-class
/// features, taken over all ordered pairs including self-pairs.
pub fn alignment(features: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let members = class_members(labels)?;
    let mut total = 0.0;
    for ids in &members {
        let mut class_sum = 0.0;
        for &j in ids {
            for &k in ids {
                class_sum += euclidean_distance(
                    features.row(j).as_slice(),
                    features.row(k).as_slice(),
                );
            }
        }
        total += class_sum / (ids.len() * ids.len()) as f64;
    }
    Ok(total / members.len() as f64)
}

/// Unit-normalized per-class mean features.
pub fn class_centers(features: &FeatureMatrix, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let members = class_members(labels)?;
    let dim = features.dim();
    let mut centers = Vec::with_capacity(members.len());
    for ids in &members {
        let mut mean = vec![0.0; dim];
        for &i in ids {
            for (m, x) in mean.iter_mut().zip(features.row(i).as_slice()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= ids.len() as f64;
        }
        centers.push(geometry::normalize(&mean)?.into_vec());
    }
    Ok(centers)
}

/// Mean distance from each class center to its k nearest other centers,
/// averaged over classes. A class's own center is excluded from its
/// neighbor set.
pub fn neighborhood_uniformity(
    features: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let centers = class_centers(features, labels)?;
    let classes = centers.len();
    if classes < k + 1 {
        return Err(Error::TooFewClasses {
            needed: k + 1,
            got: classes,
        });
    }
    let mut total = 0.0;
    let mut distances = Vec::with_capacity(classes - 1);
    for (i, center) in centers.iter().enumerate() {
        distances.clear();
        for (j, other) in centers.iter().enumerate() {
            if i != j {
                distances.push(euclidean_distance(center, other));
            }
        }
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        total += distances[..k].iter().sum::<f64>();
    }
    Ok(total / (classes * k) as f64)
}

/// Overall accuracy plus accuracy restricted to the many/medium/few splits.
pub fn split_accuracy(
    predictions: &[usize],
    labels: &[usize],
    train_counts: &[usize],
    thresholds: &SplitThresholds,
) -> Result<SplitAccuracy> {
    thresholds.validate()?;
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = train_counts.len();
    for value in labels.iter().chain(predictions) {
        if *value >= classes {
            return Err(Error::ClassOutOfRange {
                class: *value,
                classes,
            });
        }
    }

    let mut hits = [0usize; 4]; // all, many, medium, few
    let mut totals = [0usize; 4];
    for (prediction, label) in predictions.iter().zip(labels) {
        let count = train_counts[*label];
        let split = if count > thresholds.many_min {
            1
        } else if count < thresholds.few_max {
            3
        } else {
            2
        };
        let correct = usize::from(prediction == label);
        totals[0] += 1;
        hits[0] += correct;
        totals[split] += 1;
        hits[split] += correct;
    }
    let ratio = |i: usize| -> Option<f64> {
        (totals[i] > 0).then(|| hits[i] as f64 / totals[i] as f64)
    };
    Ok(SplitAccuracy {
        all: ratio(0).unwrap(),
        many: ratio(1),
        medium: ratio(2),
        few: ratio(3),
    })
}
