use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min-max scaling to `[0, 1]` over the fitting rows.
///
/// Features that were constant during fitting map to 0. Values outside the
/// fitted range are not clipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: ArrayView2<'_, f64>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::InvalidInput("cannot fit a scaler on zero rows".into()));
        }
        let mut min = vec![f64::INFINITY; rows.ncols()];
        let mut max = vec![f64::NEG_INFINITY; rows.ncols()];
        for row in rows.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    pub fn is_fitted(&self) -> bool {
        !self.min.is_empty()
    }

    fn check(&self, len: usize) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::NotFitted("scaler"));
        }
        if len != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                actual: len,
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x.len())?;
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect())
    }

    pub fn apply_rows(&self, rows: ArrayView2<'_, f64>) -> Result<ndarray::Array2<f64>> {
        self.check(rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                let (lo, hi) = (self.min[j], self.max[j]);
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
        Ok(out)
    }

    /// Inverse of [`Scaler::apply`]; degenerate features come back as their
    /// fitted value.
    pub fn invert(&self, scaled: &[f64]) -> Result<Vec<f64>> {
        self.check(scaled.len())?;
        Ok(scaled
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&s, (&lo, &hi))| if hi > lo { s * (hi - lo) + lo } else { lo })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scales_to_unit_interval() {
        let s = Scaler::fit(array![[0.0, 3.0], [10.0, 3.0]].view()).unwrap();
        assert_eq!(s.apply(&[5.0, 3.0]).unwrap(), vec![0.5, 0.0]);
        assert_eq!(s.apply(&[20.0, -7.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(s.invert(&[0.5, 0.0]).unwrap(), vec![5.0, 3.0]);
    }

    #[test]
    fn unfitted_and_mismatched() {
        assert!(matches!(Scaler::default().apply(&[1.0]), Err(Error::NotFitted(_))));
        let s = Scaler::fit(array![[0.0, 1.0]].view()).unwrap();
        assert!(s.apply(&[1.0]).is_err());
        assert!(Scaler::fit(ndarray::Array2::<f64>::zeros((0, 3)).view()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn round_trip_and_range(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 2..30)) {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            let m = ndarray::Array2::from_shape_vec((rows.len(), 4), flat).unwrap();
            let s = Scaler::fit(m.view()).unwrap();
            for row in &rows {
                let scaled = s.apply(row).unwrap();
                for (j, v) in scaled.iter().enumerate() {
                    proptest::prop_assert!((0.0..=1.0).contains(v));
                    if s.max[j] > s.min[j] {
                        let back = s.invert(&scaled).unwrap()[j];
                        proptest::prop_assert!((back - row[j]).abs() < 1e-12 * row[j].abs().max(1.0));
                    }
                }
            }
        }
    }
}
