//! Normalized-vector primitives shared by every other module.
//!
//! All embeddings live on the unit hypersphere; this module owns
//! normalization, cosine similarity, the stable softmax kernel, and
//! uniform sampling on the sphere. Everything here is a pure function
//! over immutable inputs.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance used when validating that a vector is unit-norm.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Norms below this are treated as zero and cannot be normalized.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

/// Norms within this distance of 1 are already unit; `normalize` returns
/// the input unchanged so that normalization is bitwise idempotent.
const RENORM_SKIP_TOLERANCE: f64 = 1e-12;

/// A vector of unit Euclidean norm, dimension at least 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector {
    components: Vec<f64>,
}

impl UnitVector {
    /// Validates that `components` is unit-norm within [`UNIT_NORM_TOLERANCE`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidDimension {
                got: components.len(),
            });
        }
        let norm = euclidean_norm(&components);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                context: "unit vector components".into(),
            });
        }
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "vector norm {norm} is not unit within {UNIT_NORM_TOLERANCE:e}"
            )));
        }
        Ok(Self { components })
    }

    /// Caller guarantees unit norm; used on hot paths that just normalized.
    pub(crate) fn new_unchecked(components: Vec<f64>) -> Self {
        debug_assert!((euclidean_norm(&components) - 1.0).abs() <= UNIT_NORM_TOLERANCE);
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.components
    }
}

/// A stack of unit vectors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<UnitVector>,
    dim: usize,
}

impl FeatureMatrix {
    pub fn empty(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { got: dim });
        }
        Ok(Self { rows: Vec::new(), dim })
    }

    pub fn from_rows(rows: Vec<UnitVector>) -> Result<Self> {
        let dim = match rows.first() {
            Some(first) => first.dim(),
            None => return Err(Error::EmptyInput),
        };
        for row in &rows {
            if row.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.dim(),
                });
            }
        }
        Ok(Self { rows, dim })
    }

    /// Normalizes each raw row; rejects zero rows.
    pub fn from_unnormalized(rows: &[Vec<f64>]) -> Result<Self> {
        let normalized = rows
            .iter()
            .map(|row| normalize(row))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(normalized)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: usize) -> &UnitVector {
        &self.rows[index]
    }

    pub fn rows(&self) -> &[UnitVector] {
        &self.rows
    }

    pub fn iter(&self) -> std::slice::Iter<'_, UnitVector> {
        self.rows.iter()
    }

    pub(crate) fn rows_mut(&mut self) -> &mut [UnitVector] {
        &mut self.rows
    }

    /// Raw row views, for kernels that work on plain slices.
    pub fn raw_rows(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.as_slice()).collect()
    }
}

pub(crate) fn euclidean_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Inner product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scales `v` to unit norm.
///
/// Inputs already unit within 1e-12 are returned unchanged, which makes
/// normalization bitwise idempotent.
pub fn normalize(v: &[f64]) -> Result<UnitVector> {
    if v.len() < 2 {
        return Err(Error::InvalidDimension { got: v.len() });
    }
    let norm = euclidean_norm(v);
    if !norm.is_finite() {
        return Err(Error::NonFinite {
            context: "normalize input".into(),
        });
    }
    if norm < ZERO_NORM_FLOOR {
        return Err(Error::ZeroVector { norm });
    }
    if (norm - 1.0).abs() <= RENORM_SKIP_TOLERANCE {
        return Ok(UnitVector::new_unchecked(v.to_vec()));
    }
    Ok(UnitVector::new_unchecked(
        v.iter().map(|x| x / norm).collect(),
    ))
}

/// Inner product of two unit vectors; lies in [-1, 1] up to rounding.
pub fn cosine_sim(a: &UnitVector, b: &UnitVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}

/// Temperature-scaled softmax with max-subtraction.
///
/// At τ = 0.07 the scaled scores reach ±14 for unit-vector similarities,
/// so the shift is required to keep the exponentials in range.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::NonPositiveTemperature { got: temperature });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "softmax scores".into(),
        });
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    Ok(out)
}

/// log(Σ exp(sᵢ)), max-subtracted. Exact (returns s₀) for a single score.
pub(crate) fn log_sum_exp(scores: &[f64]) -> f64 {
    debug_assert!(!scores.is_empty());
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    max + sum.ln()
}

/// Index of the maximum value; ties break toward the lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Independent draws from the standard spherical Gaussian, normalized.
///
/// Deterministic for a fixed seed; distinct seeds give independent streams.
pub fn sample_uniform_sphere(dim: usize, count: usize, seed: u64) -> Result<FeatureMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension { got: dim });
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let mut generator = rng::stream(seed, "uniform-sphere");
    let mut rows = Vec::with_capacity(count);
    while rows.len() < count {
        let raw: Vec<f64> = (0..dim)
            .map(|_| StandardNormal.sample(&mut generator))
            .collect();
        // A zero draw has probability zero but would poison normalize.
        match normalize(&raw) {
            Ok(unit) => rows.push(unit),
            Err(Error::ZeroVector { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    FeatureMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_four_five() {
        let unit = normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(unit.as_slice(), &[0.6, 0.8]);
    }

    #[test]
    fn normalize_is_identity_on_unit_input() {
        let unit = normalize(&[1.0, 0.0]).unwrap();
        assert_eq!(unit.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_zero_vector() {
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn normalize_rejects_dimension_one() {
        assert!(matches!(
            normalize(&[2.0]),
            Err(Error::InvalidDimension { got: 1 })
        ));
    }

    #[test]
    fn cosine_self_and_orthogonal() {
        let e0 = UnitVector::new(vec![1.0, 0.0]).unwrap();
        let e1 = UnitVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine_sim(&e0, &e0).unwrap(), 1.0);
        assert_eq!(cosine_sim(&e0, &e1).unwrap(), 0.0);
    }

    #[test]
    fn cosine_direct_dot_product() {
        let a = UnitVector::new(vec![0.6, 0.8]).unwrap();
        let b = UnitVector::new(vec![0.8, 0.6]).unwrap();
        assert!((cosine_sim(&a, &b).unwrap() - 0.96).abs() < 1e-15);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = UnitVector::new(vec![1.0, 0.0]).unwrap();
        let b = UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            cosine_sim(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softmax_symmetric_scores() {
        let p = softmax(&[2.5, 2.5, 2.5], 0.3).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_two_scores_direct_evaluation() {
        let e = std::f64::consts::E;
        let expected = [e / (e + 1.0), 1.0 / (e + 1.0)];
        let p = softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - expected[0]).abs() < 1e-12);
        assert!((p[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance_large_scores() {
        let shifted = softmax(&[1000.0, 999.0], 1.0).unwrap();
        let base = softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!((shifted[0] - base[0]).abs() < 1e-12);
        assert!((shifted[1] - base[1]).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_empty_and_bad_temperature() {
        assert!(matches!(softmax(&[], 1.0), Err(Error::EmptyInput)));
        assert!(matches!(
            softmax(&[1.0], 0.0),
            Err(Error::NonPositiveTemperature { .. })
        ));
        assert!(matches!(
            softmax(&[1.0], -2.0),
            Err(Error::NonPositiveTemperature { .. })
        ));
    }

    #[test]
    fn sphere_sampling_is_deterministic() {
        let a = sample_uniform_sphere(8, 16, 42).unwrap();
        let b = sample_uniform_sphere(8, 16, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_uniform_sphere(8, 16, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sphere_sampling_rows_are_unit() {
        let m = sample_uniform_sphere(2, 1, 9).unwrap();
        assert!((euclidean_norm(m.row(0).as_slice()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_sampling_coordinate_means_vanish() {
        let m = sample_uniform_sphere(8, 1000, 7).unwrap();
        for coord in 0..8 {
            let mean: f64 =
                m.iter().map(|r| r.as_slice()[coord]).sum::<f64>() / m.len() as f64;
            assert!(
                mean.abs() < 0.05,
                "coordinate {coord} mean {mean} too far from 0"
            );
        }
    }

    proptest! {
        #[test]
        fn cosine_bounded(seed in 0u64..1000) {
            let m = sample_uniform_sphere(6, 2, seed).unwrap();
            let sim = cosine_sim(m.row(0), m.row(1)).unwrap();
            prop_assert!(sim.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn softmax_sums_to_one(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..64),
            tau in 1e-3f64..1e3,
        ) {
            let p = softmax(&scores, tau).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn softmax_shift_invariant(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..32),
            shift in -100.0f64..100.0,
            tau in 0.07f64..10.0,
        ) {
            let base = softmax(&scores, tau).unwrap();
            let shifted_scores: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let shifted = softmax(&shifted_scores, tau).unwrap();
            for (a, b) in base.iter().zip(&shifted) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn normalize_idempotent_bitwise(
            raw in proptest::collection::vec(-10.0f64..10.0, 2..32),
        ) {
            prop_assume!(euclidean_norm(&raw) >= 1e-6);
            let once = normalize(&raw).unwrap();
            let twice = normalize(once.as_slice()).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
