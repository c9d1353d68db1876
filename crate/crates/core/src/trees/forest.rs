use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow, sample_rows, Gini, Tree};
use super::{check_xy, index_labels, Classifier, Matrix, Task, ThresholdMode, TreeConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Hyperparameters for [`fit_random_forest`] / [`fit_extra_trees`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeConfig,
}

/// Bagged (random forest) or randomized (extra trees) classification forest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub classes: Vec<u32>,
    pub config: TreeConfig,
    pub trees: Vec<Tree>,
}

/// Random forest: tree `i` is grown with seed `config.seed + i`, on a
/// bootstrap resample when `config.bootstrap` is set.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[u32],
    n_trees: usize,
    config: &TreeConfig,
) -> Result<ForestModel> {
    fit_forest(x, y, n_trees, config)
}

/// Extremely randomized trees: like [`fit_random_forest`] but without
/// bootstrap and with one uniform random threshold per candidate feature.
pub fn fit_extra_trees(
    x: &Matrix,
    y: &[u32],
    n_trees: usize,
    config: &TreeConfig,
) -> Result<ForestModel> {
    let config = TreeConfig {
        bootstrap: false,
        threshold_mode: ThresholdMode::Random,
        ..config.clone()
    };
    fit_forest(x, y, n_trees, &config)
}

fn fit_forest(x: &Matrix, y: &[u32], n_trees: usize, config: &TreeConfig) -> Result<ForestModel> {
    if n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    if config.task != Task::Classification {
        return Err(Error::Config("forests here are classifiers".into()));
    }
    check_xy(x, y.len())?;
    config.validate(x.n_cols())?;
    let (classes, idx) = index_labels(y);
    let objective = Gini {
        labels: &idx,
        n_classes: classes.len(),
    };
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let tree_config = TreeConfig {
                seed: rng::derive(config.seed, i as u64),
                ..config.clone()
            };
            let mut rng = rng::seeded(tree_config.seed);
            let rows = sample_rows(x.n_rows(), tree_config.bootstrap, &mut rng);
            grow(x, rows, &objective, &tree_config, &mut rng, classes.clone())
        })
        .collect();
    Ok(ForestModel {
        classes,
        config: config.clone(),
        trees,
    })
}

impl Classifier for ForestModel {
    fn classes(&self) -> &[u32] {
        &self.classes
    }

    /// Mean of the trees' normalized leaf distributions.
    fn predict_scores(&self, x: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.predict_distribution(x)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}
