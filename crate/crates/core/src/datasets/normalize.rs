//! Min-max scaling of every feature to `[-1, 1]`.

use crate::numerics::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::dim(
                "NormalizationStats",
                format!("{} minima, {} maxima", min.len(), max.len()),
            ));
        }
        if let Some(j) = (0..min.len()).find(|&j| min[j].partial_cmp(&max[j]).is_none_or(|o| o.is_gt())) {
            return Err(Error::Precondition(format!(
                "feature {j}: min {} > max {}",
                min[j], max[j]
            )));
        }
        Ok(Self { min, max })
    }

    /// Per-feature extrema of `features`.
    pub fn fit(features: &Matrix) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Precondition("cannot fit normalization on zero rows".into()));
        }
        let mut min = features.row(0).to_vec();
        let mut max = min.clone();
        for r in 1..features.rows() {
            for (j, &x) in features.row(r).iter().enumerate() {
                min[j] = min[j].min(x);
                max[j] = max[j].max(x);
            }
        }
        Self::new(min, max)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `2(x − min)/(max − min) − 1`, clamped to `[-1, 1]`. Constant
    /// features map to 0.
    pub fn apply(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.dim() {
            return Err(Error::dim(
                "apply_normalization",
                format!("{} features, stats for {}", features.cols(), self.dim()),
            ));
        }
        let mut out = features.clone();
        for r in 0..out.rows() {
            for (j, x) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *x = if range > 0.0 {
                    (2.0 * (*x - self.min[j]) / range - 1.0).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::new(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn maps_range_to_unit_interval() {
        let m = col(&[0.0, 5.0, 10.0]);
        let stats = NormalizationStats::fit(&m).unwrap();
        assert_eq!(stats.apply(&m).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let m = col(&[4.0, 4.0, 4.0]);
        let stats = NormalizationStats::fit(&m).unwrap();
        assert_eq!(stats.apply(&m).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_fit_values_are_clamped() {
        let stats = NormalizationStats::fit(&col(&[0.0, 10.0])).unwrap();
        assert_eq!(stats.apply(&col(&[25.0, -3.0, 7.5])).unwrap().data(), &[1.0, -1.0, 0.5]);
    }

    #[test]
    fn empty_fit_and_width_mismatch_fail() {
        assert!(NormalizationStats::fit(&Matrix::zeros(0, 3)).is_err());
        let stats = NormalizationStats::fit(&Matrix::zeros(2, 3)).unwrap();
        assert!(stats.apply(&Matrix::zeros(2, 2)).is_err());
        assert!(NormalizationStats::new(vec![1.0], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn fitted_values_land_in_unit_interval(data in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let m = Matrix::new(4, 3, data).unwrap();
            let stats = NormalizationStats::fit(&m).unwrap();
            let out = stats.apply(&m).unwrap();
            prop_assert!(out.data().iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }
}
