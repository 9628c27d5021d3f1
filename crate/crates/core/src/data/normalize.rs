//! Affine HU-to-unit-interval mapping with clipping.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::DataError;

/// Normalization window: `hu_min` maps to 0, `hu_max` to 1, values outside
/// clip to the boundary. The descriptor is stored with every corpus so
/// outputs can be mapped back to HU exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub hu_min: f64,
    pub hu_max: f64,
}

impl Default for Window {
    fn default() -> Self {
        // the soft-tissue display window; air and dense bone clip
        Window { hu_min: -160.0, hu_max: 240.0 }
    }
}

impl Window {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.hu_max <= self.hu_min {
            return Err(DataError::BadWindow { hu_min: self.hu_min, hu_max: self.hu_max });
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.hu_max - self.hu_min
    }

    #[inline]
    pub fn normalize_value(&self, hu: f64) -> f64 {
        ((hu - self.hu_min) / self.width()).clamp(0.0, 1.0)
    }

    #[inline]
    pub fn denormalize_value(&self, unit: f64) -> f64 {
        self.hu_min + unit.clamp(0.0, 1.0) * self.width()
    }

    pub fn normalize(&self, image: &Tensor<f64>) -> Tensor<f64> {
        image.map(|v| self.normalize_value(v))
    }

    pub fn denormalize(&self, image: &Tensor<f64>) -> Tensor<f64> {
        image.map(|v| self.denormalize_value(v))
    }
}
