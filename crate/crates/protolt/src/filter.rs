//! Extraneous-text filtering and attribute enhancement.
//!
//! A sample arrives with M candidate text embeddings of mixed quality.
//! The filter scores each candidate by similarity to the sample's class
//! prototype, turns the scores into softmax weights (temperature 1), and
//! reconstructs a single text feature as the weighted blend, renormalized.
//! Noisy candidates far from the prototype get small weights and stop
//! polluting the matching signal.

use crate::bank::PrototypeBank;
use crate::error::{Error, Result};
use crate::geometry::{self, FeatureMatrix, UnitVector};

/// M candidate text embeddings for one sample of a known class.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCandidateSet {
    candidates: FeatureMatrix,
    class_id: usize,
}

impl TextCandidateSet {
    pub fn new(candidates: FeatureMatrix, class_id: usize) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self {
            candidates,
            class_id,
        })
    }

    pub fn candidates(&self) -> &FeatureMatrix {
        &self.candidates
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn prototype_for<'a>(set: &TextCandidateSet, bank: &'a PrototypeBank) -> Result<&'a UnitVector> {
    if set.candidates.dim() != bank.dim() {
        return Err(Error::DimensionMismatch {
            left: set.candidates.dim(),
            right: bank.dim(),
        });
    }
    bank.prototype(set.class_id)
}

/// Softmax weights (temperature 1) over candidate-prototype similarities.
pub fn filter_weights(set: &TextCandidateSet, bank: &PrototypeBank) -> Result<Vec<f64>> {
    let prototype = prototype_for(set, bank)?;
    let scores: Vec<f64> = set
        .candidates
        .iter()
        .map(|candidate| geometry::dot(candidate.as_slice(), prototype.as_slice()))
        .collect();
    geometry::softmax(&scores, 1.0)
}

/// Weight-blended candidate sum, renormalized to the sphere.
///
/// A single candidate is returned verbatim. Errors with `ZeroVector` when
/// antipodal candidates cancel the blend below the zero floor.
pub fn reconstruct(set: &TextCandidateSet, bank: &PrototypeBank) -> Result<UnitVector> {
    if set.len() == 1 {
        prototype_for(set, bank)?; // still validate dimensions and class
        return Ok(set.candidates.row(0).clone());
    }
    let weights = filter_weights(set, bank)?;
    let mut blend = vec![0.0; set.candidates.dim()];
    for (weight, candidate) in weights.iter().zip(set.candidates.iter()) {
        for (acc, component) in blend.iter_mut().zip(candidate.as_slice()) {
            *acc += weight * component;
        }
    }
    geometry::normalize(&blend)
}

/// Index of the dominant candidate; ties break toward the lowest index.
pub fn most_relevant(set: &TextCandidateSet, bank: &PrototypeBank) -> Result<usize> {
    let weights = filter_weights(set, bank)?;
    Ok(geometry::argmax_first(&weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    fn bank_2d() -> PrototypeBank {
        PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0], 0.999)
            .unwrap()
    }

    fn set(rows: &[Vec<f64>], class_id: usize) -> TextCandidateSet {
        TextCandidateSet::new(FeatureMatrix::from_unnormalized(rows).unwrap(), class_id)
            .unwrap()
    }

    #[test]
    fn identical_candidates_get_uniform_weights() {
        let s = set(&[vec![0.6, 0.8], vec![0.6, 0.8], vec![0.6, 0.8]], 0);
        let w = filter_weights(&s, &bank_2d()).unwrap();
        for v in w {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_candidate_weights_hand_evaluated() {
        let s = set(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0);
        let w = filter_weights(&s, &bank_2d()).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((w[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn singleton_weight_is_one() {
        let s = set(&[vec![0.0, 1.0]], 0);
        assert_eq!(filter_weights(&s, &bank_2d()).unwrap(), vec![1.0]);
    }

    #[test]
    fn singleton_reconstruction_is_identity() {
        let raw = sample_uniform_sphere(2, 1, 9).unwrap();
        let s = TextCandidateSet::new(raw.clone(), 1).unwrap();
        let out = reconstruct(&s, &bank_2d()).unwrap();
        for (a, b) in out.as_slice().iter().zip(raw.row(0).as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reconstruction_hand_evaluated() {
        let s = set(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0);
        let out = reconstruct(&s, &bank_2d()).unwrap();
        let e = std::f64::consts::E;
        let w0 = e / (e + 1.0);
        let w1 = 1.0 / (e + 1.0);
        let norm = (w0 * w0 + w1 * w1).sqrt();
        assert!((out.as_slice()[0] - w0 / norm).abs() < 1e-12);
        assert!((out.as_slice()[1] - w1 / norm).abs() < 1e-12);
    }

    #[test]
    fn antipodal_cancellation_is_zero_vector_error() {
        // c = (0,1) is equidistant from (1,0) and (-1,0): weights are equal
        // and the blend cancels exactly.
        let s = set(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 1);
        assert!(matches!(
            reconstruct(&s, &bank_2d()),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn most_relevant_prefers_aligned_candidate() {
        let s = set(&[vec![1.0, 0.0], vec![0.0, 1.0]], 0);
        assert_eq!(most_relevant(&s, &bank_2d()).unwrap(), 0);

        let aligned_second = set(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![-1.0, 0.0]], 0);
        assert_eq!(most_relevant(&aligned_second, &bank_2d()).unwrap(), 1);
    }

    #[test]
    fn most_relevant_breaks_ties_low() {
        let s = set(&[vec![0.6, 0.8], vec![0.6, 0.8]], 0);
        assert_eq!(most_relevant(&s, &bank_2d()).unwrap(), 0);
    }

    #[test]
    fn class_out_of_range_rejected() {
        let s = set(&[vec![1.0, 0.0]], 7);
        assert!(matches!(
            filter_weights(&s, &bank_2d()),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn weights_follow_candidate_permutation() {
        let rows = sample_uniform_sphere(6, 5, 33).unwrap();
        let freqs = vec![1.0; 3];
        let bank = PrototypeBank::random(6, 3, &freqs, 0.999, 44).unwrap();
        let s = TextCandidateSet::new(rows.clone(), 2).unwrap();
        let w = filter_weights(&s, &bank).unwrap();

        let perm = [4usize, 2, 0, 1, 3];
        let permuted_rows =
            FeatureMatrix::from_rows(perm.iter().map(|i| rows.row(*i).clone()).collect()).unwrap();
        let permuted = TextCandidateSet::new(permuted_rows, 2).unwrap();
        let wp = filter_weights(&permuted, &bank).unwrap();
        for (new_pos, old_pos) in perm.iter().enumerate() {
            assert!((wp[new_pos] - w[*old_pos]).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_output_is_unit() {
        let freqs = vec![1.0; 4];
        let bank = PrototypeBank::random(8, 4, &freqs, 0.999, 55).unwrap();
        for seed in 0..20 {
            let rows = sample_uniform_sphere(8, 6, seed).unwrap();
            let s = TextCandidateSet::new(rows, (seed % 4) as usize).unwrap();
            let out = reconstruct(&s, &bank).unwrap();
            let norm: f64 = out.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
