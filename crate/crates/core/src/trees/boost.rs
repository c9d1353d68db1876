use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{grow, SecondOrder, Tree, Variance};
use super::{check_xy, index_labels, Classifier, Matrix, Task, ThresholdMode, TreeConfig};
use crate::error::{Error, Result};
use crate::rng;

/// Hessians are floored here so a saturated softmax cannot zero a leaf
/// denominator when lambda is 0.
const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XgbParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub gamma: f64,
}

impl Default for XgbParams {
    fn default() -> Self {
        XgbParams {
            rounds: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

/// Multiclass gradient boosting on the softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub classes: Vec<u32>,
    pub params: BoostParams,
    /// Log class priors.
    pub initial_scores: Vec<f64>,
    /// `trees[round][class]`.
    pub trees: Vec<Vec<Tree>>,
    /// Mean training cross-entropy before round 0 and after each round.
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

/// Second-order (gradient + hessian) multiclass boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XgbModel {
    pub classes: Vec<u32>,
    pub params: XgbParams,
    pub initial_scores: Vec<f64>,
    pub trees: Vec<Vec<Tree>>,
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

fn cross_entropy(scores: &[f64], k: usize, labels: &[usize]) -> f64 {
    let total: f64 = scores
        .chunks_exact(k)
        .zip(labels)
        .map(|(s, &y)| log_sum_exp(s) - s[y])
        .sum();
    total / labels.len() as f64
}

fn priors(labels: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
        .iter()
        .map(|&c| (c as f64 / labels.len() as f64).ln())
        .collect()
}

struct Boosted {
    classes: Vec<u32>,
    initial_scores: Vec<f64>,
    trees: Vec<Vec<Tree>>,
    loss_trace: Vec<f64>,
}

/// Shared stagewise loop. `fit_class` grows the tree for one class given the
/// current probabilities and the one-hot labels.
fn boost<F>(x: &Matrix, y: &[u32], rounds: usize, learning_rate: f64, fit_class: F) -> Result<Boosted>
where
    F: Fn(usize, &[f64], &[usize], usize) -> Tree + Sync,
{
    check_xy(x, y.len())?;
    if !(learning_rate > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let (classes, labels) = index_labels(y);
    let k = classes.len();
    if k < 2 {
        return Err(Error::DegenerateClassification(format!(
            "boosting needs at least 2 classes, got {k}"
        )));
    }
    let n = x.n_rows();
    let initial_scores = priors(&labels, k);
    let mut scores: Vec<f64> = (0..n).flat_map(|_| initial_scores.iter().copied()).collect();
    let mut loss_trace = vec![cross_entropy(&scores, k, &labels)];
    let mut trees = Vec::with_capacity(rounds);

    for _ in 0..rounds {
        let probs: Vec<f64> = scores.par_chunks(k).flat_map_iter(softmax).collect();
        let round: Vec<Tree> = (0..k)
            .into_par_iter()
            .map(|class| fit_class(class, &probs, &labels, k))
            .collect();
        scores
            .par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, row_scores)| {
                let row = x.row(i);
                for (s, tree) in row_scores.iter_mut().zip(&round) {
                    *s += learning_rate * tree.predict_value(row);
                }
            });
        loss_trace.push(cross_entropy(&scores, k, &labels));
        trees.push(round);
    }

    Ok(Boosted {
        classes,
        initial_scores,
        trees,
        loss_trace,
    })
}

fn regression_config(max_depth: usize) -> TreeConfig {
    TreeConfig {
        task: Task::Regression,
        max_depth: Some(max_depth),
        min_samples_split: 2,
        features_per_split: None,
        threshold_mode: ThresholdMode::Best,
        bootstrap: false,
        seed: 0,
    }
}

/// Gradient boosting: each round fits one variance-split regression tree per
/// class to `onehot(y) - softmax(scores)` and adds `learning_rate` times its
/// output to that class's score.
pub fn fit_gbdt(x: &Matrix, y: &[u32], params: &BoostParams) -> Result<GbdtModel> {
    let config = regression_config(params.max_depth);
    let fitted = boost(x, y, params.rounds, params.learning_rate, |class, probs, labels, k| {
        let residuals: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (l == class) as u8 as f64 - probs[i * k + class])
            .collect();
        let objective = Variance {
            targets: &residuals,
        };
        let mut rng = rng::seeded(0);
        grow(x, (0..x.n_rows()).collect(), &objective, &config, &mut rng, Vec::new())
    })?;
    Ok(GbdtModel {
        classes: fitted.classes,
        params: params.clone(),
        initial_scores: fitted.initial_scores,
        trees: fitted.trees,
        loss_trace: fitted.loss_trace,
    })
}

/// Second-order boosting: trees are grown on per-row gradient `p - y` and
/// hessian `p (1 - p)` with leaf weight `-G / (H + lambda)` and split gain
/// `(G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)) / 2 - gamma`;
/// splits with non-positive gain are rejected.
pub fn fit_xgb(x: &Matrix, y: &[u32], params: &XgbParams) -> Result<XgbModel> {
    if params.lambda < 0.0 || params.gamma < 0.0 {
        return Err(Error::Config("lambda and gamma must be non-negative".into()));
    }
    let config = regression_config(params.max_depth);
    let fitted = boost(x, y, params.rounds, params.learning_rate, |class, probs, labels, k| {
        let mut grad = Vec::with_capacity(labels.len());
        let mut hess = Vec::with_capacity(labels.len());
        for (i, &l) in labels.iter().enumerate() {
            let p = probs[i * k + class];
            grad.push(p - (l == class) as u8 as f64);
            hess.push((p * (1.0 - p)).max(MIN_HESSIAN));
        }
        let objective = SecondOrder {
            grad: &grad,
            hess: &hess,
            lambda: params.lambda,
            gamma: params.gamma,
        };
        let mut rng = rng::seeded(0);
        grow(x, (0..x.n_rows()).collect(), &objective, &config, &mut rng, Vec::new())
    })?;
    Ok(XgbModel {
        classes: fitted.classes,
        params: params.clone(),
        initial_scores: fitted.initial_scores,
        trees: fitted.trees,
        loss_trace: fitted.loss_trace,
    })
}

fn raw_scores(initial: &[f64], trees: &[Vec<Tree>], learning_rate: f64, x: &[f64]) -> Vec<f64> {
    let mut scores = initial.to_vec();
    for round in trees {
        for (s, tree) in scores.iter_mut().zip(round) {
            *s += learning_rate * tree.predict_value(x);
        }
    }
    scores
}

impl GbdtModel {
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        raw_scores(&self.initial_scores, &self.trees, self.params.learning_rate, x)
    }
}

impl XgbModel {
    pub fn raw_scores(&self, x: &[f64]) -> Vec<f64> {
        raw_scores(&self.initial_scores, &self.trees, self.params.learning_rate, x)
    }
}

impl Classifier for GbdtModel {
    fn classes(&self) -> &[u32] {
        &self.classes
    }

    fn predict_scores(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.raw_scores(x))
    }
}

impl Classifier for XgbModel {
    fn classes(&self) -> &[u32] {
        &self.classes
    }

    fn predict_scores(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.raw_scores(x))
    }
}
