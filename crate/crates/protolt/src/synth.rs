//! Deterministic generator of long-tailed paired image/text embedding data.
//!
//! Class counts follow an exponential profile with a configurable
//! imbalance ratio. Each class has a clean anchor direction (well spread
//! on the sphere, the representative handed to anchored prototype init)
//! and a data direction that both modalities' samples cluster around.
//! Two tail pathologies are built in:
//!
//! - a *crowd block* of tail classes whose data directions share a strong
//!   common component, putting them at small mutual angles, with
//!   additional per-sample noise along that same component. Suppressing
//!   the shared direction both spreads the crowd apart and removes its
//!   dominant noise, which is exactly the repair prototype matching can
//!   learn;
//! - *overlap pairs*: the rarest classes sit a couple of noise standard
//!   deviations away from a much more frequent partner class, so they
//!   stay genuinely confusable in any linear embedding and expose the
//!   frequency bias of a learnable classifier.
//!
//! Each training sample carries M candidate text vectors, a configurable
//! fraction of which come from a shared class-independent distractor
//! cloud.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{self, FeatureMatrix};
use crate::rng;

/// Balanced test-set size per class.
pub const TEST_SAMPLES_PER_CLASS: usize = 20;

/// Relevant text candidates are guaranteed within this angle (radians) of
/// their class data direction.
pub const RELEVANT_MAX_ANGLE: f64 = std::f64::consts::FRAC_PI_3;

/// Strength of the shared component mixed into crowd-block directions.
const CROWD_PULL: f64 = 2.0;

/// Per-sample noise along the shared component for crowd-block classes,
/// as a multiple of `spread`.
const COMMON_MODE_FACTOR: f64 = 16.0;

/// Distance of an overlap-pair tail's data direction from its partner, as
/// a multiple of `spread`. A few standard deviations: separable in
/// principle but close enough that a frequency-biased boundary loses a
/// visible share of the rare class.
const PAIR_GAP_FACTOR: f64 = 3.0;

/// Offset of an overlap-pair tail's clean anchor from the partner anchor,
/// along the tail's own direction. Larger than the data gap, so the
/// prototype initialized from it sits outward of the tail's feature
/// cluster and shifts the prototype-head boundary toward the frequent
/// partner.
const PAIR_ANCHOR_GAP: f64 = 0.5;

/// Shape of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongTailSpec {
    /// Number of classes K.
    pub classes: usize,
    /// Raw input dimension D, before the encoders.
    pub dim_raw: usize,
    /// Sample count of the largest class.
    pub n_max: usize,
    /// Ratio n_max / n_min of the count profile.
    pub imbalance: f64,
    /// Candidate text vectors per training sample (M).
    pub text_candidates: usize,
    /// Fraction of candidates drawn from the distractor cloud.
    pub noise_fraction: f64,
    /// Within-class Gaussian scale in raw space.
    pub spread: f64,
    pub seed: u64,
}

impl Default for LongTailSpec {
    fn default() -> Self {
        Self {
            classes: 20,
            dim_raw: 64,
            n_max: 150,
            imbalance: 20.0,
            text_candidates: 4,
            noise_fraction: 0.25,
            spread: 0.05,
            seed: 17,
        }
    }
}

impl LongTailSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "classes must be at least 2, got {}",
                self.classes
            )));
        }
        if self.dim_raw < 2 {
            return Err(Error::InvalidDimension { got: self.dim_raw });
        }
        if self.n_max == 0 {
            return Err(Error::InvalidArgument("n_max must be positive".into()));
        }
        if !(self.imbalance >= 1.0) || !self.imbalance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "imbalance must be at least 1, got {}",
                self.imbalance
            )));
        }
        if self.text_candidates == 0 {
            return Err(Error::InvalidArgument(
                "text_candidates must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::InvalidArgument(format!(
                "noise_fraction must be in [0, 1), got {}",
                self.noise_fraction
            )));
        }
        if !(self.spread > 0.0) || !self.spread.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "spread must be positive, got {}",
                self.spread
            )));
        }
        Ok(())
    }
}

/// Raw training and test data plus the ground-truth class directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub train_images: Vec<Vec<f64>>,
    pub train_candidates: Vec<Vec<Vec<f64>>>,
    pub train_labels: Vec<usize>,
    pub test_images: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
    pub class_counts: Vec<usize>,
    /// Clean anchor direction per class: well spread on the sphere,
    /// encoded by anchored prototype init.
    pub anchors: FeatureMatrix,
    /// Data-side class directions both modalities draw around; the tail
    /// block is squeezed together.
    pub class_directions: FeatureMatrix,
}

/// Exponential long-tail count profile:
/// `n_k = max(1, round(n_max · imbalance^(−k/(K−1))))`, ties to even.
pub fn class_counts_profile(classes: usize, n_max: usize, imbalance: f64) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(Error::EmptyInput);
    }
    if !(imbalance >= 1.0) || !imbalance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "imbalance must be at least 1, got {imbalance}"
        )));
    }
    if classes == 1 {
        return Ok(vec![n_max.max(1)]);
    }
    let counts = (0..classes)
        .map(|k| {
            let exponent = -(k as f64) / (classes as f64 - 1.0);
            let raw = n_max as f64 * imbalance.powf(exponent);
            (raw.round_ties_even() as usize).max(1)
        })
        .collect();
    Ok(counts)
}

fn gaussian_row(dim: usize, generator: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(generator)).collect()
}

fn noisy_point(anchor: &[f64], spread: f64, generator: &mut ChaCha8Rng) -> Vec<f64> {
    anchor
        .iter()
        .map(|a| {
            let noise: f64 = StandardNormal.sample(generator);
            a + spread * noise
        })
        .collect()
}

fn angle_to(anchor: &[f64], point: &[f64]) -> f64 {
    let norm = geometry::dot(point, point).sqrt();
    if norm == 0.0 {
        return std::f64::consts::PI;
    }
    (geometry::dot(anchor, point) / norm).clamp(-1.0, 1.0).acos()
}

/// Number of pathological tail classes (crowd block plus overlap tails).
pub fn tail_cluster_size(classes: usize) -> usize {
    (classes * 3 / 10).max(2)
}

/// (frequent partner, rare tail) overlap pairs for a given class count.
/// Empty when the dataset is too small to spare partner classes.
pub fn overlap_pairs(classes: usize) -> Vec<(usize, usize)> {
    let tail = tail_cluster_size(classes);
    let pair_budget = tail.saturating_sub(2).min(2);
    let first_partner = 3;
    if classes < tail + first_partner + pair_budget + 1 {
        return Vec::new();
    }
    (0..pair_budget)
        .map(|i| (first_partner + i, classes - 1 - i))
        .collect()
}

/// Class ids forming the crowd block (shared-component tail classes).
pub fn crowd_classes(classes: usize) -> std::ops::Range<usize> {
    let tail = tail_cluster_size(classes);
    let pairs = overlap_pairs(classes).len();
    classes - tail..classes - pairs
}

pub fn generate(spec: &LongTailSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let classes = spec.classes;
    let dim = spec.dim_raw;

    // Clean anchors: uniform on the sphere.
    let anchors =
        geometry::sample_uniform_sphere(dim, classes, rng::derive_seed(spec.seed, "anchors"))?;
    let mut shared_rng = rng::stream(spec.seed, "shared-component");
    let shared = geometry::normalize(&gaussian_row(dim, &mut shared_rng))?.into_vec();

    let crowd = crowd_classes(classes);
    let pairs = overlap_pairs(classes);
    let pair_gap = PAIR_GAP_FACTOR * spec.spread;
    let direction_rows: Vec<Vec<f64>> = (0..classes)
        .map(|class| {
            let anchor = anchors.row(class).as_slice();
            if crowd.contains(&class) {
                // Crowded tails: dominated by the shared component.
                shared
                    .iter()
                    .zip(anchor)
                    .map(|(s, a)| CROWD_PULL * s + a)
                    .collect()
            } else if let Some((partner, _)) = pairs.iter().find(|(_, t)| *t == class) {
                // Overlap tails: a small class-specific offset from the
                // frequent partner's direction.
                anchors
                    .row(*partner)
                    .as_slice()
                    .iter()
                    .zip(anchor)
                    .map(|(p, a)| p + pair_gap * a)
                    .collect()
            } else {
                anchor.to_vec()
            }
        })
        .collect();
    let class_directions = FeatureMatrix::from_unnormalized(&direction_rows)?;

    // Shared distractor cloud center, away from any particular class.
    let mut distractor_rng = rng::stream(spec.seed, "distractor");
    let distractor_center = geometry::normalize(&gaussian_row(dim, &mut distractor_rng))?;

    let class_counts = class_counts_profile(classes, spec.n_max, spec.imbalance)?;
    let common_mode = COMMON_MODE_FACTOR * spec.spread;
    let sample_point = |class: usize, generator: &mut ChaCha8Rng| -> Vec<f64> {
        let mut point = noisy_point(
            class_directions.row(class).as_slice(),
            spec.spread,
            generator,
        );
        if crowd.contains(&class) {
            let swing: f64 = StandardNormal.sample(generator);
            for (x, s) in point.iter_mut().zip(&shared) {
                *x += common_mode * swing * s;
            }
        }
        point
    };

    let mut image_rng = rng::stream(spec.seed, "train-images");
    let mut text_rng = rng::stream(spec.seed, "train-candidates");
    let mut train_images = Vec::new();
    let mut train_candidates = Vec::new();
    let mut train_labels = Vec::new();
    let noise_per_sample =
        (spec.noise_fraction * spec.text_candidates as f64).floor() as usize;
    let relevant_per_sample = spec.text_candidates - noise_per_sample;

    for (class, &count) in class_counts.iter().enumerate() {
        let direction = class_directions.row(class).as_slice();
        for _ in 0..count {
            train_images.push(sample_point(class, &mut image_rng));
            let mut candidates = Vec::with_capacity(spec.text_candidates);
            for _ in 0..relevant_per_sample {
                // Rejection-sample until within the relevance cone.
                loop {
                    let candidate = sample_point(class, &mut text_rng);
                    if angle_to(direction, &candidate) <= RELEVANT_MAX_ANGLE {
                        candidates.push(candidate);
                        break;
                    }
                }
            }
            for _ in 0..noise_per_sample {
                candidates.push(noisy_point(
                    distractor_center.as_slice(),
                    spec.spread,
                    &mut text_rng,
                ));
            }
            train_candidates.push(candidates);
            train_labels.push(class);
        }
    }

    let mut test_rng = rng::stream(spec.seed, "test-images");
    let mut test_images = Vec::new();
    let mut test_labels = Vec::new();
    for class in 0..classes {
        for _ in 0..TEST_SAMPLES_PER_CLASS {
            test_images.push(sample_point(class, &mut test_rng));
            test_labels.push(class);
        }
    }

    Ok(SyntheticDataset {
        train_images,
        train_candidates,
        train_labels,
        test_images,
        test_labels,
        class_counts,
        anchors,
        class_directions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_endpoints() {
        assert_eq!(class_counts_profile(2, 100, 10.0).unwrap(), vec![100, 10]);
    }

    #[test]
    fn profile_balanced_degenerate() {
        assert_eq!(
            class_counts_profile(4, 100, 1.0).unwrap(),
            vec![100, 100, 100, 100]
        );
    }

    #[test]
    fn profile_five_class_oracle() {
        // Direct evaluation of n_k = round(100 · 20^(−k/4)), ties to even.
        let expected: Vec<usize> = (0..5)
            .map(|k| {
                let raw = 100.0 * 20f64.powf(-(k as f64) / 4.0);
                (raw.round_ties_even() as usize).max(1)
            })
            .collect();
        assert_eq!(expected, vec![100, 47, 22, 11, 5]);
        assert_eq!(class_counts_profile(5, 100, 20.0).unwrap(), expected);
    }

    #[test]
    fn profile_is_nonincreasing_and_total_matches() {
        let counts = class_counts_profile(20, 150, 20.0).unwrap();
        for pair in counts.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
        let spec = LongTailSpec::default();
        let data = generate(&spec).unwrap();
        assert_eq!(data.class_counts, counts);
        assert_eq!(data.train_images.len(), counts.iter().sum::<usize>());
        assert_eq!(data.train_labels.len(), data.train_images.len());
        assert_eq!(data.train_candidates.len(), data.train_images.len());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = LongTailSpec {
            classes: 6,
            n_max: 20,
            ..LongTailSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate(&LongTailSpec {
            seed: spec.seed + 1,
            ..spec
        })
        .unwrap();
        assert_ne!(a.train_images, c.train_images);
    }

    #[test]
    fn test_split_is_balanced() {
        let spec = LongTailSpec {
            classes: 5,
            n_max: 12,
            ..LongTailSpec::default()
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.test_images.len(), 5 * TEST_SAMPLES_PER_CLASS);
        for class in 0..5 {
            let count = data.test_labels.iter().filter(|l| **l == class).count();
            assert_eq!(count, TEST_SAMPLES_PER_CLASS);
        }
    }

    #[test]
    fn clean_candidates_stay_in_relevance_cone() {
        let spec = LongTailSpec {
            classes: 4,
            n_max: 30,
            noise_fraction: 0.0,
            ..LongTailSpec::default()
        };
        let data = generate(&spec).unwrap();
        for (sample, label) in data.train_candidates.iter().zip(&data.train_labels) {
            let direction = data.class_directions.row(*label).as_slice();
            for candidate in sample {
                assert!(angle_to(direction, candidate) <= RELEVANT_MAX_ANGLE);
            }
        }
    }

    #[test]
    fn near_zero_spread_keeps_images_on_their_class_direction() {
        let spec = LongTailSpec {
            classes: 3,
            n_max: 10,
            spread: 1e-9,
            ..LongTailSpec::default()
        };
        let data = generate(&spec).unwrap();
        for (image, label) in data.train_images.iter().zip(&data.train_labels) {
            let direction = data.class_directions.row(*label).as_slice();
            assert!(angle_to(direction, image) < 1e-6);
        }
    }

    #[test]
    fn crowd_directions_are_mutually_closer_than_to_heads() {
        let spec = LongTailSpec::default();
        let data = generate(&spec).unwrap();
        let crowd: Vec<usize> = crowd_classes(spec.classes).collect();
        assert!(crowd.len() >= 2);
        let head_ids: Vec<usize> =
            (0..spec.classes - tail_cluster_size(spec.classes)).collect();
        let angle = |a: usize, b: usize| {
            angle_to(
                data.class_directions.row(a).as_slice(),
                data.class_directions.row(b).as_slice(),
            )
        };
        let mut max_crowd_pair = 0f64;
        for (i, &a) in crowd.iter().enumerate() {
            for &b in &crowd[i + 1..] {
                max_crowd_pair = max_crowd_pair.max(angle(a, b));
            }
        }
        let mut min_crowd_head = f64::INFINITY;
        for &a in &crowd {
            for &b in &head_ids {
                min_crowd_head = min_crowd_head.min(angle(a, b));
            }
        }
        assert!(
            max_crowd_pair < min_crowd_head,
            "crowd pairs ({max_crowd_pair}) should be closer than crowd-head ({min_crowd_head})"
        );
    }

    #[test]
    fn overlap_tails_hug_their_partners() {
        let spec = LongTailSpec::default();
        let data = generate(&spec).unwrap();
        let pairs = overlap_pairs(spec.classes);
        assert_eq!(pairs, vec![(3, 19), (4, 18)]);
        for (partner, tail) in pairs {
            let gap = angle_to(
                data.class_directions.row(partner).as_slice(),
                data.class_directions.row(tail).as_slice(),
            );
            // Roughly two noise standard deviations: confusable but distinct.
            assert!(gap > 0.0 && gap < 0.2, "pair gap {gap} out of range");
        }
    }

    #[test]
    fn anchors_stay_well_spread_for_tail_classes() {
        // The clean anchors must not inherit the crowding; anchored
        // prototype init relies on them staying far apart.
        let spec = LongTailSpec::default();
        let data = generate(&spec).unwrap();
        let crowd: Vec<usize> = crowd_classes(spec.classes).collect();
        for (i, &a) in crowd.iter().enumerate() {
            for &b in &crowd[i + 1..] {
                let anchor_angle =
                    angle_to(data.anchors.row(a).as_slice(), data.anchors.row(b).as_slice());
                let direction_angle = angle_to(
                    data.class_directions.row(a).as_slice(),
                    data.class_directions.row(b).as_slice(),
                );
                assert!(anchor_angle > direction_angle);
            }
        }
    }

    #[test]
    fn distractors_are_less_similar_to_class_anchor_than_relevant() {
        let spec = LongTailSpec {
            classes: 4,
            n_max: 400,
            imbalance: 1.0,
            text_candidates: 2,
            noise_fraction: 0.5,
            ..LongTailSpec::default()
        };
        let data = generate(&spec).unwrap();
        // Candidate order is relevant-first, then distractors.
        let mut relevant_sim = 0.0;
        let mut distractor_sim = 0.0;
        let mut samples = 0usize;
        for (candidates, label) in data.train_candidates.iter().zip(&data.train_labels) {
            let direction = data.class_directions.row(*label).as_slice();
            let sim = |c: &[f64]| {
                let norm = geometry::dot(c, c).sqrt();
                geometry::dot(direction, c) / norm
            };
            relevant_sim += sim(&candidates[0]);
            distractor_sim += sim(&candidates[1]);
            samples += 1;
        }
        assert!(samples >= 1000, "need at least 1000 candidate pairs");
        assert!(
            relevant_sim / samples as f64 > distractor_sim / samples as f64,
            "relevant candidates must be more anchor-aligned on average"
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let base = LongTailSpec::default();
        assert!(LongTailSpec { classes: 1, ..base.clone() }.validate().is_err());
        assert!(LongTailSpec { imbalance: 0.5, ..base.clone() }.validate().is_err());
        assert!(LongTailSpec { noise_fraction: 1.0, ..base.clone() }.validate().is_err());
        assert!(LongTailSpec { spread: 0.0, ..base.clone() }.validate().is_err());
        assert!(LongTailSpec { text_candidates: 0, ..base }.validate().is_err());
    }
}
