//! CART decision trees and the four base learners of the voting ensemble.
//!
//! All learners share one exact split search ([`cart`]); they differ in the
//! objective (Gini, variance, or second-order gain), in how thresholds are
//! proposed, and in how trees are aggregated.

mod boost;
mod cart;
mod forest;

pub use boost::{fit_gbdt, fit_xgb, softmax, BoostParams, GbdtModel, XgbModel, XgbParams};
pub use cart::{fit_tree, gini, Leaf, Node, Targets, Tree};
pub use forest::{fit_extra_trees, fit_random_forest, ForestModel, ForestParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    n_cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, n_cols: usize) -> Result<Self> {
        if n_cols == 0 || data.len() % n_cols != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of {n_cols} columns",
                data.len()
            )));
        }
        Ok(Matrix { data, n_cols })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(data, n_cols)
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.n_cols
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Scan midpoints between consecutive distinct values.
    Best,
    /// One uniform draw in `[min, max)` per candidate feature.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub task: Task,
    /// `None` grows until nodes are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// `None` considers every feature at every node.
    pub features_per_split: Option<usize>,
    pub threshold_mode: ThresholdMode,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            task: Task::Classification,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            threshold_mode: ThresholdMode::Best,
            bootstrap: false,
            seed: 0,
        }
    }
}

impl TreeConfig {
    /// Random-forest defaults for `n_features` columns: bootstrap on,
    /// `floor(sqrt(d))` features per split, unbounded depth.
    pub fn random_forest(n_features: usize, seed: u64) -> Self {
        TreeConfig {
            features_per_split: Some(((n_features as f64).sqrt().floor() as usize).max(1)),
            bootstrap: true,
            seed,
            ..TreeConfig::default()
        }
    }

    pub(crate) fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be at least 2".into()));
        }
        if let Some(k) = self.features_per_split {
            if k == 0 || k > n_features {
                return Err(Error::Config(format!(
                    "features_per_split {k} outside 1..={n_features}"
                )));
            }
        }
        Ok(())
    }
}

/// A fitted multiclass model over integer label codes.
pub trait Classifier {
    /// Label codes this model can emit, ascending.
    fn classes(&self) -> &[u32];

    /// Per-class scores aligned with [`Classifier::classes`]; they sum to 1.
    fn predict_scores(&self, x: &[f64]) -> Vec<f64>;

    /// Argmax label and the score vector. Ties go to the lowest code.
    fn predict_class(&self, x: &[f64]) -> (u32, Vec<f64>) {
        let scores = self.predict_scores(x);
        let best = argmax(&scores);
        (self.classes()[best], scores)
    }

    fn predict(&self, x: &[f64]) -> u32 {
        self.predict_class(x).0
    }

    fn accuracy(&self, x: &Matrix, y: &[u32]) -> f64 {
        let correct = x
            .rows()
            .zip(y)
            .filter(|(row, &label)| self.predict(row) == label)
            .count();
        correct as f64 / y.len().max(1) as f64
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Sorted distinct labels and each row's index into them.
pub(crate) fn index_labels(y: &[u32]) -> (Vec<u32>, Vec<usize>) {
    let mut classes: Vec<u32> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let idx = y
        .iter()
        .map(|l| classes.binary_search(l).expect("label collected above"))
        .collect();
    (classes, idx)
}

pub(crate) fn check_xy(x: &Matrix, n_targets: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if x.n_rows() != n_targets {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: n_targets,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3, 0.2]), 1);
    }

    #[test]
    fn matrix_shape_checks() {
        assert!(Matrix::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
    }
}
