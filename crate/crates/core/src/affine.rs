//! Per-coordinate affine standardization.

use alloc::vec;
use alloc::vec::Vec;

/// Maps physical coordinates to standardized ones: `xn = (x - mean) / scale`.
///
/// The inverse recovers physical units exactly up to floating-point rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(dim: usize) -> Self {
        Affine {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.scale.iter().all(|&s| s == 1.0)
    }

    #[inline]
    pub fn to_normalized(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.scale[i];
        }
    }

    #[inline]
    pub fn to_physical(&self, xn: &[f64], out: &mut [f64]) {
        for i in 0..xn.len() {
            out[i] = self.mean[i] + self.scale[i] * xn[i];
        }
    }

    /// `log |det d(normalized)/d(physical)|` = `-sum(ln scale)`.
    pub fn log_det_to_normalized(&self) -> f64 {
        -self.scale.iter().map(|&s| libm::log(s)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_recovers_physical_units() {
        let a = Affine {
            mean: vec![1.5, -0.25],
            scale: vec![0.3, 7.0],
        };
        let x = [2.0, -3.0];
        let mut n = [0.0; 2];
        let mut back = [0.0; 2];
        a.to_normalized(&x, &mut n);
        a.to_physical(&n, &mut back);
        for i in 0..2 {
            assert!((back[i] - x[i]).abs() < 1e-12 * x[i].abs().max(1.0));
        }
    }

    #[test]
    fn identity_has_zero_log_det() {
        assert_eq!(Affine::identity(3).log_det_to_normalized(), 0.0);
    }
}
