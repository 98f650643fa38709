//! Adaptive lossy-compression model: payload shrinkage and the distortion
//! introduced by a given compression ratio.
//!
//! Distortion follows a fitted parametric curve in the ratio and the wavelet
//! filter length; the coefficient set is configuration, validated at load
//! time to be monotone nondecreasing over the admissible ratio range.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

/// Points sampled when validating monotonicity of a coefficient set.
const MONOTONICITY_SAMPLES: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum CompressionError {
    #[error("compression ratio {0} outside [0, 1)")]
    RatioOutOfRange(f64),
    #[error("compression ratio {0} above the configured maximum {1}")]
    RatioAboveMax(f64, f64),
    #[error("distortion model undefined at ratio 1 (pole)")]
    Pole,
    #[error("filter length must be >= 1")]
    FilterLength,
    #[error("ratio_max must lie in (0, 1)")]
    RatioMax,
    #[error("distortion coefficients are not monotone nondecreasing near ratio {0:.4}")]
    NotMonotone(f64),
    #[error("distortion model produced a non-finite value at ratio {0:.4}")]
    NonFinite(f64),
}

/// Fitted distortion curve for the compression scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionModel<R: Real> {
    pub c1: R,
    pub c2: R,
    pub c3: R,
    pub c4: R,
    pub c5: R,
    pub c6: R,
    /// Wavelet filter length of the compression scheme.
    pub filter_length: R,
    /// Largest admissible ratio, strictly below 1 to stay clear of the pole.
    pub ratio_max: R,
}

impl<R: Real> DistortionModel<R> {
    /// Builds and validates a model: the curve must be finite and monotone
    /// nondecreasing on `[0, ratio_max]` (checked by dense sampling).
    pub fn new(coefficients: [R; 6], filter_length: R, ratio_max: R) -> Result<Self, CompressionError> {
        let [c1, c2, c3, c4, c5, c6] = coefficients;
        if filter_length < R::one() {
            return Err(CompressionError::FilterLength);
        }
        if !(ratio_max > R::zero() && ratio_max < R::one()) {
            return Err(CompressionError::RatioMax);
        }
        let model = Self { c1, c2, c3, c4, c5, c6, filter_length, ratio_max };
        let mut prev = R::neg_infinity();
        for i in 0..=MONOTONICITY_SAMPLES {
            let ratio = ratio_max * R::of_usize(i) / R::of_usize(MONOTONICITY_SAMPLES);
            let value = model.raw(ratio);
            if !value.is_finite() {
                return Err(CompressionError::NonFinite(ratio.as_f64()));
            }
            if value < prev - R::real(1e-12) {
                return Err(CompressionError::NotMonotone(ratio.as_f64()));
            }
            prev = prev.max(value);
        }
        Ok(model)
    }

    /// Unclamped curve value.
    fn raw(&self, ratio: R) -> R {
        let rem = R::one() - ratio;
        let pct = self.c1 * rem.exp() + self.c2 * rem.powf(-self.c3)
            + self.c4 * self.filter_length.powf(-self.c5)
            - self.c6;
        pct / R::real(100.0)
    }

    /// Normalized distortion in [0, 1] for the given ratio.
    pub fn distortion(&self, ratio: R) -> Result<R, CompressionError> {
        Ok(self.distortion_with_diag(ratio)?.0)
    }

    /// Like [`Self::distortion`] but also reports whether clamping fired,
    /// so callers can count clamp events.
    pub fn distortion_with_diag(&self, ratio: R) -> Result<(R, bool), CompressionError> {
        if ratio == R::one() {
            return Err(CompressionError::Pole);
        }
        if ratio < R::zero() || ratio > self.ratio_max {
            return Err(CompressionError::RatioAboveMax(ratio.as_f64(), self.ratio_max.as_f64()));
        }
        let raw = self.raw(ratio);
        let clamped = raw.max(R::zero()).min(R::one());
        Ok((clamped, clamped != raw))
    }
}

/// Payload length after compressing `raw_bits` at `ratio`.
pub fn compressed_length<R: Real>(raw_bits: R, ratio: R) -> Result<R, CompressionError> {
    if !(ratio >= R::zero() && ratio < R::one()) {
        return Err(CompressionError::RatioOutOfRange(ratio.as_f64()));
    }
    debug_assert!(raw_bits >= R::zero());
    Ok(raw_bits * (R::one() - ratio))
}

/// A PEN's compression choice for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionDecision<R: Real> {
    pub ratio: R,
    pub raw_bits: R,
    pub compressed_bits: R,
}

impl<R: Real> CompressionDecision<R> {
    pub fn new(raw_bits: R, ratio: R, ratio_max: R) -> Result<Self, CompressionError> {
        if ratio > ratio_max {
            return Err(CompressionError::RatioAboveMax(ratio.as_f64(), ratio_max.as_f64()));
        }
        let compressed_bits = compressed_length(raw_bits, ratio)?;
        Ok(Self { ratio, raw_bits, compressed_bits })
    }
}

/// Coefficient set shipped in the default configuration.
///
/// Chosen to be monotone with distortion near 0.02 at ratio 0 and near 0.45
/// at ratio 0.95 for filter length 4; the absolute values are illustrative.
pub fn default_coefficients<R: Real>() -> [R; 6] {
    [
        R::real(0.5),
        R::real(2.307),
        R::real(1.0),
        R::real(2.0),
        R::real(1.0),
        R::real(2.166),
    ]
}
