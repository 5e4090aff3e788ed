//! The category prototype bank.
//!
//! Holds one unit-norm prototype per class together with the class
//! frequency vector and the EMA momentum. Prototypes are never trained by
//! gradient; they move only through frequency-weighted EMA blends toward
//! observed features, and are renormalized after every blend so that all
//! downstream consumers can keep treating them as directions on the sphere.

use crate::error::{Error, Result};
use crate::geometry::{self, FeatureMatrix, UnitVector};
use crate::loss::LabeledBatch;

/// Default EMA momentum.
pub const DEFAULT_MOMENTUM: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    prototypes: FeatureMatrix,
    frequencies: Vec<f64>,
    momentum: f64,
}

impl PrototypeBank {
    /// Builds a bank from externally supplied anchor rows.
    ///
    /// Rows are normalized; frequencies are rescaled to sum to 1.
    pub fn from_anchors(
        anchors: &[Vec<f64>],
        frequencies: &[f64],
        momentum: f64,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::EmptyInput);
        }
        if frequencies.len() != anchors.len() {
            return Err(Error::CountMismatch {
                expected: anchors.len(),
                got: frequencies.len(),
            });
        }
        let prototypes = FeatureMatrix::from_unnormalized(anchors)?;
        Ok(Self {
            prototypes,
            frequencies: normalize_frequencies(frequencies)?,
            momentum: validate_momentum(momentum)?,
        })
    }

    /// Builds a bank with prototypes drawn uniformly on the sphere.
    pub fn random(
        dim: usize,
        classes: usize,
        frequencies: &[f64],
        momentum: f64,
        seed: u64,
    ) -> Result<Self> {
        if classes == 0 {
            return Err(Error::EmptyInput);
        }
        if frequencies.len() != classes {
            return Err(Error::CountMismatch {
                expected: classes,
                got: frequencies.len(),
            });
        }
        let prototypes = geometry::sample_uniform_sphere(dim, classes, seed)?;
        Ok(Self {
            prototypes,
            frequencies: normalize_frequencies(frequencies)?,
            momentum: validate_momentum(momentum)?,
        })
    }

    /// Rebuilds a bank from previously saved parts (rows renormalized).
    pub fn from_parts(
        prototypes: &[Vec<f64>],
        frequencies: &[f64],
        momentum: f64,
    ) -> Result<Self> {
        Self::from_anchors(prototypes, frequencies, momentum)
    }

    pub fn class_count(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes.dim()
    }

    pub fn prototypes(&self) -> &FeatureMatrix {
        &self.prototypes
    }

    pub fn prototype(&self, class: usize) -> Result<&UnitVector> {
        if class >= self.class_count() {
            return Err(Error::ClassOutOfRange {
                class,
                classes: self.class_count(),
            });
        }
        Ok(self.prototypes.row(class))
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// One EMA step for a single labeled sample.
    ///
    /// The prototype blends toward `(z_text + π_k·z_image) / (π_k + 1)` with
    /// momentum `m` and is renormalized afterwards. The frequency weight
    /// slows image-driven drift for rare classes; at π_k = 0 the target is
    /// the text feature alone. With m = 1 the prototype is left untouched
    /// bit for bit.
    pub fn ema_update(
        &mut self,
        class: usize,
        z_text: &UnitVector,
        z_image: &UnitVector,
    ) -> Result<()> {
        if class >= self.class_count() {
            return Err(Error::ClassOutOfRange {
                class,
                classes: self.class_count(),
            });
        }
        let dim = self.dim();
        if z_text.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: z_text.dim(),
            });
        }
        if z_image.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: z_image.dim(),
            });
        }
        let m = self.momentum;
        if m == 1.0 {
            return Ok(());
        }
        let pi = self.frequencies[class];
        let current = self.prototypes.row(class).as_slice();
        let blended: Vec<f64> = current
            .iter()
            .zip(z_text.as_slice().iter().zip(z_image.as_slice()))
            .map(|(c, (t, i))| m * c + (1.0 - m) * (t + pi * i) / (pi + 1.0))
            .collect();
        let renormalized = geometry::normalize(&blended)?;
        self.prototypes.rows_mut()[class] = renormalized;
        Ok(())
    }

    /// Applies `ema_update` once per sample, in ascending batch position.
    pub fn batch_ema_update(&mut self, batch: &LabeledBatch) -> Result<()> {
        if !batch.is_empty() && batch.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: batch.dim(),
            });
        }
        for i in 0..batch.len() {
            self.ema_update(batch.labels()[i], batch.texts().row(i), batch.images().row(i))?;
        }
        Ok(())
    }
}

fn normalize_frequencies(frequencies: &[f64]) -> Result<Vec<f64>> {
    for (class, value) in frequencies.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: format!("frequency for class {class}"),
            });
        }
        if *value < 0.0 {
            return Err(Error::NegativeFrequency {
                class,
                value: *value,
            });
        }
    }
    let total: f64 = frequencies.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument(
            "frequencies must not all be zero".into(),
        ));
    }
    Ok(frequencies.iter().map(|f| f / total).collect())
}

fn validate_momentum(momentum: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&momentum) || !momentum.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "momentum must be in [0, 1], got {momentum}"
        )));
    }
    Ok(momentum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;

    fn unit(v: Vec<f64>) -> UnitVector {
        UnitVector::new(v).unwrap()
    }

    #[test]
    fn anchors_identity_rows_kept() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let bank = PrototypeBank::from_anchors(&anchors, &[0.5, 0.5], 0.999).unwrap();
        assert_eq!(bank.prototype(0).unwrap().as_slice(), &[1.0, 0.0]);
        assert_eq!(bank.prototype(1).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn frequencies_are_renormalized() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let bank = PrototypeBank::from_anchors(&anchors, &[2.0, 2.0], 0.999).unwrap();
        assert_eq!(bank.frequencies(), &[0.5, 0.5]);
    }

    #[test]
    fn anchor_count_mismatch_rejected() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            PrototypeBank::from_anchors(&anchors, &[1.0], 0.9),
            Err(Error::CountMismatch { .. })
        ));
    }

    #[test]
    fn negative_frequency_rejected() {
        let anchors = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(matches!(
            PrototypeBank::from_anchors(&anchors, &[1.0, -0.25], 0.9),
            Err(Error::NegativeFrequency { class: 1, .. })
        ));
    }

    #[test]
    fn random_bank_deterministic_per_seed() {
        let freqs = vec![1.0; 20];
        let a = PrototypeBank::random(16, 20, &freqs, 0.999, 3).unwrap();
        let b = PrototypeBank::random(16, 20, &freqs, 0.999, 3).unwrap();
        assert_eq!(a, b);
        let c = PrototypeBank::random(16, 20, &freqs, 0.999, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_bank_rows_unit() {
        let bank = PrototypeBank::random(2, 2, &[0.5, 0.5], 0.999, 1).unwrap();
        for row in bank.prototypes().iter() {
            let norm: f64 = row.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ema_momentum_one_is_bitwise_fixed_point() {
        let anchors = vec![vec![0.6, 0.8], vec![0.0, 1.0]];
        let mut bank = PrototypeBank::from_anchors(&anchors, &[0.5, 0.5], 1.0).unwrap();
        let before = bank.clone();
        bank.ema_update(0, &unit(vec![0.0, 1.0]), &unit(vec![1.0, 0.0]))
            .unwrap();
        assert_eq!(bank, before);
    }

    #[test]
    fn ema_hand_evaluated_step() {
        // m=0.999, c=(1,0), z_text=z_image=(0,1), π_0=1:
        // blend = (0.999, 0.001), then divide by sqrt(0.998002).
        let mut bank =
            PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0], 0.999)
                .unwrap();
        bank.ema_update(0, &unit(vec![0.0, 1.0]), &unit(vec![0.0, 1.0]))
            .unwrap();
        let norm = (0.999f64 * 0.999 + 0.001 * 0.001).sqrt();
        let expected = [0.999 / norm, 0.001 / norm];
        let got = bank.prototype(0).unwrap().as_slice();
        assert!((got[0] - expected[0]).abs() < 1e-12);
        assert!((got[1] - expected[1]).abs() < 1e-12);
    }

    #[test]
    fn ema_zero_frequency_targets_text_alone() {
        // π_0 = 0, m = 0.5, c=(1,0), z_text=(0,1): blend = (0.5, 0.5).
        let mut bank =
            PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 1.0], 0.5)
                .unwrap();
        bank.ema_update(0, &unit(vec![0.0, 1.0]), &unit(vec![1.0, 0.0]))
            .unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let got = bank.prototype(0).unwrap().as_slice();
        assert!((got[0] - s).abs() < 1e-12);
        assert!((got[1] - s).abs() < 1e-12);

        // Same update with an image feature pointing elsewhere must agree
        // bitwise: at π = 0 the image contribution vanishes exactly.
        let mut other =
            PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 1.0], 0.5)
                .unwrap();
        other
            .ema_update(0, &unit(vec![0.0, 1.0]), &unit(vec![0.0, -1.0]))
            .unwrap();
        assert_eq!(bank, other);
    }

    #[test]
    fn ema_touches_exactly_one_prototype() {
        let freqs = vec![1.0; 5];
        let mut bank = PrototypeBank::random(8, 5, &freqs, 0.9, 11).unwrap();
        let before = bank.clone();
        let probe = sample_uniform_sphere(8, 2, 99).unwrap();
        bank.ema_update(2, probe.row(0), probe.row(1)).unwrap();
        for class in 0..5 {
            let now = bank.prototype(class).unwrap().as_slice();
            let was = before.prototype(class).unwrap().as_slice();
            if class == 2 {
                assert_ne!(now, was);
            } else {
                for (a, b) in now.iter().zip(was) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }

    #[test]
    fn ema_class_out_of_range() {
        let mut bank =
            PrototypeBank::from_anchors(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0], 0.9)
                .unwrap();
        assert!(matches!(
            bank.ema_update(2, &unit(vec![1.0, 0.0]), &unit(vec![1.0, 0.0])),
            Err(Error::ClassOutOfRange { class: 2, classes: 2 })
        ));
    }

    #[test]
    fn prototypes_stay_unit_after_many_updates() {
        let freqs: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        let mut bank = PrototypeBank::random(8, 6, &freqs, 0.99, 5).unwrap();
        let draws = sample_uniform_sphere(8, 400, 123).unwrap();
        for step in 0..200 {
            let class = step % 6;
            bank.ema_update(class, draws.row(step * 2), draws.row(step * 2 + 1))
                .unwrap();
        }
        for row in bank.prototypes().iter() {
            let norm: f64 = row.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }
}
