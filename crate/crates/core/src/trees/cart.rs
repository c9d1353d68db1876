use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_xy, index_labels, Matrix, Task, ThresholdMode, TreeConfig};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leaf {
    /// Training rows per class index.
    Histogram(Vec<u32>),
    Value(f64),
}

/// Flat tree node; children are indices into [`Tree::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(Leaf),
}

/// A fitted CART tree. The root is `nodes[0]`; `x[feature] <= threshold`
/// goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_features: usize,
    /// Label codes behind histogram indices; empty for regression trees.
    pub classes: Vec<u32>,
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, x: &[f64]) -> &Leaf {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf(leaf) => return leaf,
            }
        }
    }

    /// Normalized class distribution aligned with [`Tree::classes`].
    pub fn predict_distribution(&self, x: &[f64]) -> Vec<f64> {
        match self.leaf(x) {
            Leaf::Histogram(h) => {
                let total: u32 = h.iter().sum();
                h.iter().map(|&c| c as f64 / total as f64).collect()
            }
            Leaf::Value(_) => panic!("predict_distribution on a regression tree"),
        }
    }

    pub fn predict_value(&self, x: &[f64]) -> f64 {
        match self.leaf(x) {
            Leaf::Value(v) => *v,
            Leaf::Histogram(_) => panic!("predict_value on a classification tree"),
        }
    }

    /// Label code with the largest leaf count, lowest code on ties.
    pub fn predict_label(&self, x: &[f64]) -> u32 {
        let dist = self.predict_distribution(x);
        self.classes[super::argmax(&dist)]
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf(_) => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Training targets for [`fit_tree`].
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Labels(&'a [u32]),
    Values(&'a [f64]),
}

/// Fits one CART tree: Gini impurity for labels, squared error for values.
pub fn fit_tree(x: &Matrix, y: Targets<'_>, config: &TreeConfig) -> Result<Tree> {
    config.validate(x.n_cols())?;
    let mut rng = rng::seeded(config.seed);
    match (y, config.task) {
        (Targets::Labels(labels), Task::Classification) => {
            check_xy(x, labels.len())?;
            let (classes, idx) = index_labels(labels);
            let rows = sample_rows(x.n_rows(), config.bootstrap, &mut rng);
            let objective = Gini {
                labels: &idx,
                n_classes: classes.len(),
            };
            Ok(grow(x, rows, &objective, config, &mut rng, classes))
        }
        (Targets::Values(values), Task::Regression) => {
            check_xy(x, values.len())?;
            let rows = sample_rows(x.n_rows(), config.bootstrap, &mut rng);
            Ok(grow(x, rows, &Variance { targets: values }, config, &mut rng, Vec::new()))
        }
        _ => Err(Error::Config("targets do not match the configured task".into())),
    }
}

pub(crate) fn sample_rows(n: usize, bootstrap: bool, rng: &mut Rng) -> Vec<usize> {
    if bootstrap {
        let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        rows.sort_unstable();
        rows
    } else {
        (0..n).collect()
    }
}

/// Gini impurity `1 - sum(p_k^2)` of a class-count histogram.
pub fn gini(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// A split criterion over per-node sufficient statistics.
pub(crate) trait Objective {
    type Stats: Clone;

    fn empty(&self) -> Self::Stats;
    fn add(&self, stats: &mut Self::Stats, row: usize);
    fn remove(&self, stats: &mut Self::Stats, row: usize);
    /// Larger is better. `None` rejects the split.
    fn score(&self, left: &Self::Stats, right: &Self::Stats, parent: &Self::Stats) -> Option<f64>;
    fn is_pure(&self, stats: &Self::Stats, rows: &[usize]) -> bool;
    fn leaf(&self, stats: &Self::Stats) -> Leaf;
}

pub(crate) struct Gini<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

impl Objective for Gini<'_> {
    type Stats = Vec<u32>;

    fn empty(&self) -> Vec<u32> {
        vec![0; self.n_classes]
    }

    fn add(&self, stats: &mut Vec<u32>, row: usize) {
        stats[self.labels[row]] += 1;
    }

    fn remove(&self, stats: &mut Vec<u32>, row: usize) {
        stats[self.labels[row]] -= 1;
    }

    fn score(&self, left: &Vec<u32>, right: &Vec<u32>, _parent: &Vec<u32>) -> Option<f64> {
        let n_left: u32 = left.iter().sum();
        let n_right: u32 = right.iter().sum();
        let n = (n_left + n_right) as f64;
        let weighted = (n_left as f64 * gini(left) + n_right as f64 * gini(right)) / n;
        Some(-weighted)
    }

    fn is_pure(&self, stats: &Vec<u32>, _rows: &[usize]) -> bool {
        stats.iter().filter(|&&c| c > 0).count() <= 1
    }

    fn leaf(&self, stats: &Vec<u32>) -> Leaf {
        Leaf::Histogram(stats.clone())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn sse(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum_sq - self.sum * self.sum / self.n as f64
        }
    }
}

pub(crate) struct Variance<'a> {
    pub targets: &'a [f64],
}

impl Objective for Variance<'_> {
    type Stats = Moments;

    fn empty(&self) -> Moments {
        Moments::default()
    }

    fn add(&self, s: &mut Moments, row: usize) {
        let y = self.targets[row];
        s.n += 1;
        s.sum += y;
        s.sum_sq += y * y;
    }

    fn remove(&self, s: &mut Moments, row: usize) {
        let y = self.targets[row];
        s.n -= 1;
        s.sum -= y;
        s.sum_sq -= y * y;
    }

    fn score(&self, left: &Moments, right: &Moments, _parent: &Moments) -> Option<f64> {
        Some(-(left.sse() + right.sse()))
    }

    fn is_pure(&self, _stats: &Moments, rows: &[usize]) -> bool {
        let first = self.targets[rows[0]];
        rows.iter().all(|&r| self.targets[r] == first)
    }

    fn leaf(&self, s: &Moments) -> Leaf {
        Leaf::Value(s.sum / s.n as f64)
    }
}

/// Gradient/hessian sums for second-order boosting.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradStats {
    pub grad: f64,
    pub hess: f64,
}

pub(crate) struct SecondOrder<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub gamma: f64,
}

impl SecondOrder<'_> {
    fn term(&self, s: &GradStats) -> f64 {
        s.grad * s.grad / (s.hess + self.lambda)
    }

    pub fn gain(&self, left: &GradStats, right: &GradStats, parent: &GradStats) -> f64 {
        0.5 * (self.term(left) + self.term(right) - self.term(parent)) - self.gamma
    }

    pub fn leaf_weight(&self, s: &GradStats) -> f64 {
        let w = -s.grad / (s.hess + self.lambda);
        if w == 0.0 {
            0.0
        } else {
            w
        }
    }
}

impl Objective for SecondOrder<'_> {
    type Stats = GradStats;

    fn empty(&self) -> GradStats {
        GradStats::default()
    }

    fn add(&self, s: &mut GradStats, row: usize) {
        s.grad += self.grad[row];
        s.hess += self.hess[row];
    }

    fn remove(&self, s: &mut GradStats, row: usize) {
        s.grad -= self.grad[row];
        s.hess -= self.hess[row];
    }

    fn score(&self, left: &GradStats, right: &GradStats, parent: &GradStats) -> Option<f64> {
        let gain = self.gain(left, right, parent);
        (gain > 0.0).then_some(gain)
    }

    fn is_pure(&self, _stats: &GradStats, _rows: &[usize]) -> bool {
        false
    }

    fn leaf(&self, s: &GradStats) -> Leaf {
        Leaf::Value(self.leaf_weight(s))
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    /// Higher score wins; equal scores go to the lower feature, then the
    /// lower threshold.
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.score > o.score
                    || (self.score == o.score
                        && (self.feature, self.threshold) < (o.feature, o.threshold))
            }
        }
    }
}

/// Midpoint between two distinct consecutive values; falls back to the lower
/// value when rounding lands on the upper one.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

struct WorkItem {
    node: usize,
    start: usize,
    end: usize,
    depth: usize,
}

/// Grows a tree over `rows` (duplicates allowed, as produced by bootstrap).
pub(crate) fn grow<O: Objective>(
    x: &Matrix,
    mut rows: Vec<usize>,
    objective: &O,
    config: &TreeConfig,
    rng: &mut Rng,
    classes: Vec<u32>,
) -> Tree {
    let n_features = x.n_cols();
    let mut nodes = vec![Node::Leaf(Leaf::Value(0.0))];
    let mut stack = vec![WorkItem {
        node: 0,
        start: 0,
        end: rows.len(),
        depth: 0,
    }];
    let mut scratch: Vec<usize> = Vec::with_capacity(rows.len());
    let mut feature_order: Vec<usize> = (0..n_features).collect();
    let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());

    while let Some(task) = stack.pop() {
        let node_rows = &rows[task.start..task.end];
        let mut parent = objective.empty();
        for &r in node_rows {
            objective.add(&mut parent, r);
        }

        let stop = node_rows.len() < config.min_samples_split
            || config.max_depth.is_some_and(|d| task.depth >= d)
            || objective.is_pure(&parent, node_rows);
        let best = if stop {
            None
        } else {
            find_split(
                x,
                node_rows,
                objective,
                &parent,
                config,
                rng,
                &mut feature_order,
                &mut sorted,
            )
        };

        let Some(best) = best else {
            nodes[task.node] = Node::Leaf(objective.leaf(&parent));
            continue;
        };

        // Stable partition keeps row order, so child statistics accumulate
        // in the same order on every run.
        scratch.clear();
        scratch.extend(
            node_rows
                .iter()
                .copied()
                .filter(|&r| x.get(r, best.feature) <= best.threshold),
        );
        let n_left = scratch.len();
        scratch.extend(
            node_rows
                .iter()
                .copied()
                .filter(|&r| x.get(r, best.feature) > best.threshold),
        );
        rows[task.start..task.end].copy_from_slice(&scratch);

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf(Leaf::Value(0.0)));
        nodes.push(Node::Leaf(Leaf::Value(0.0)));
        nodes[task.node] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        let mid = task.start + n_left;
        stack.push(WorkItem {
            node: right,
            start: mid,
            end: task.end,
            depth: task.depth + 1,
        });
        stack.push(WorkItem {
            node: left,
            start: task.start,
            end: mid,
            depth: task.depth + 1,
        });
    }

    Tree {
        n_features,
        classes,
        nodes,
    }
}

#[allow(clippy::too_many_arguments)]
fn find_split<O: Objective>(
    x: &Matrix,
    rows: &[usize],
    objective: &O,
    parent: &O::Stats,
    config: &TreeConfig,
    rng: &mut Rng,
    feature_order: &mut [usize],
    sorted: &mut Vec<(f64, usize)>,
) -> Option<Candidate> {
    let wanted = config.features_per_split.unwrap_or(feature_order.len());
    if wanted < feature_order.len() {
        feature_order.shuffle(rng);
    } else {
        feature_order.sort_unstable();
    }

    let mut best: Option<Candidate> = None;
    let mut visited = 0;
    for &feature in feature_order.iter() {
        if visited >= wanted {
            break;
        }
        let found = match config.threshold_mode {
            ThresholdMode::Best => best_threshold(x, rows, feature, objective, parent, sorted),
            ThresholdMode::Random => random_threshold(x, rows, feature, objective, parent, rng),
        };
        // Constant features do not count toward the per-split budget.
        let Some(found) = found else { continue };
        visited += 1;
        if let Some(c) = found {
            if c.beats(&best) {
                best = Some(c);
            }
        }
    }
    best
}

/// `None` when the feature is constant on `rows`; `Some(None)` when no
/// threshold is acceptable to the objective.
fn best_threshold<O: Objective>(
    x: &Matrix,
    rows: &[usize],
    feature: usize,
    objective: &O,
    parent: &O::Stats,
    sorted: &mut Vec<(f64, usize)>,
) -> Option<Option<Candidate>> {
    sorted.clear();
    sorted.extend(rows.iter().map(|&r| (x.get(r, feature), r)));
    sorted.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if sorted[0].0 == sorted[sorted.len() - 1].0 {
        return None;
    }

    let mut left = objective.empty();
    let mut right = parent.clone();
    let mut best: Option<Candidate> = None;
    for i in 0..sorted.len() - 1 {
        let (value, row) = sorted[i];
        objective.add(&mut left, row);
        objective.remove(&mut right, row);
        let next = sorted[i + 1].0;
        if value < next {
            if let Some(score) = objective.score(&left, &right, parent) {
                let c = Candidate {
                    score,
                    feature,
                    threshold: midpoint(value, next),
                };
                if best.is_none_or(|b| c.score > b.score) {
                    best = Some(c);
                }
            }
        }
    }
    Some(best)
}

fn random_threshold<O: Objective>(
    x: &Matrix,
    rows: &[usize],
    feature: usize,
    objective: &O,
    parent: &O::Stats,
    rng: &mut Rng,
) -> Option<Option<Candidate>> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &r in rows {
        let v = x.get(r, feature);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return None;
    }
    let threshold = rng.random_range(lo..hi);
    let mut left = objective.empty();
    let mut right = parent.clone();
    for &r in rows {
        if x.get(r, feature) <= threshold {
            objective.add(&mut left, r);
            objective.remove(&mut right, r);
        }
    }
    Some(objective.score(&left, &right, parent).map(|score| Candidate {
        score,
        feature,
        threshold,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(values: &[f64]) -> Matrix {
        Matrix::new(values.to_vec(), 1).unwrap()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[2, 2]), 0.5);
        assert_eq!(gini(&[4, 0]), 0.0);
        assert_eq!(gini(&[]), 0.0);
    }

    #[test]
    fn splits_between_classes() {
        let x = one_d(&[1.0, 2.0, 3.0, 4.0]);
        let tree = fit_tree(&x, Targets::Labels(&[0, 0, 1, 1]), &TreeConfig::default()).unwrap();
        match &tree.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(tree.predict_distribution(&[1.0]), vec![1.0, 0.0]);
        assert_eq!(tree.predict_label(&[2.5]), 0);
        assert_eq!(tree.predict_label(&[2.6]), 1);
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let x = one_d(&[1.0, 5.0, 3.0]);
        let tree = fit_tree(&x, Targets::Labels(&[7, 7, 7]), &TreeConfig::default()).unwrap();
        assert_eq!(tree.nodes, vec![Node::Leaf(Leaf::Histogram(vec![3]))]);
        assert_eq!(tree.classes, vec![7]);
        assert_eq!(tree.predict_label(&[-100.0]), 7);
        assert_eq!(tree.predict_label(&[100.0]), 7);
    }

    #[test]
    fn constant_x_mixed_y_is_majority_leaf() {
        let x = one_d(&[2.0, 2.0, 2.0]);
        let tree = fit_tree(&x, Targets::Labels(&[1, 4, 4]), &TreeConfig::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict_label(&[2.0]), 4);
    }

    #[test]
    fn regression_leaf_is_mean() {
        let x = one_d(&[1.0, 2.0, 10.0, 11.0]);
        let cfg = TreeConfig {
            task: Task::Regression,
            max_depth: Some(1),
            ..TreeConfig::default()
        };
        let tree = fit_tree(&x, Targets::Values(&[1.0, 3.0, 10.0, 12.0]), &cfg).unwrap();
        assert_eq!(tree.predict_value(&[0.0]), 2.0);
        assert_eq!(tree.predict_value(&[20.0]), 11.0);
    }

    #[test]
    fn max_depth_is_honored() {
        let x = one_d(&(0..64).map(f64::from).collect::<Vec<_>>());
        let y: Vec<u32> = (0..64).map(|i| i % 2).collect();
        let cfg = TreeConfig {
            max_depth: Some(3),
            ..TreeConfig::default()
        };
        let tree = fit_tree(&x, Targets::Labels(&y), &cfg).unwrap();
        assert_eq!(tree.depth(), 3);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let x = Matrix::new(vec![], 1).unwrap();
        assert!(fit_tree(&x, Targets::Labels(&[]), &TreeConfig::default()).is_err());
        let x = one_d(&[1.0, 2.0]);
        assert!(fit_tree(&x, Targets::Labels(&[1]), &TreeConfig::default()).is_err());
        assert!(fit_tree(&x, Targets::Values(&[1.0, 2.0]), &TreeConfig::default()).is_err());
    }

    #[test]
    fn second_order_leaf_weight() {
        let obj = SecondOrder {
            grad: &[],
            hess: &[],
            lambda: 1.0,
            gamma: 0.0,
        };
        let w = obj.leaf_weight(&GradStats {
            grad: 4.0,
            hess: 3.0,
        });
        assert_eq!(w, -1.0);
    }

    #[test]
    fn second_order_gain_matches_formula() {
        let obj = SecondOrder {
            grad: &[],
            hess: &[],
            lambda: 1.0,
            gamma: 0.5,
        };
        let l = GradStats { grad: 10.0, hess: 5.0 };
        let r = GradStats { grad: -10.0, hess: 5.0 };
        let p = GradStats { grad: 0.0, hess: 10.0 };
        let expected = 0.5 * (100.0 / 6.0 + 100.0 / 6.0 - 0.0) - 0.5;
        assert!((obj.gain(&l, &r, &p) - expected).abs() < 1e-12);
    }

    #[test]
    fn random_thresholds_never_use_constant_feature() {
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|i| [5.0, (i * 7 % 13) as f64, (i % 5) as f64])
            .collect();
        let y: Vec<u32> = (0..40).map(|i| ((i * 7 % 13) > 6) as u32).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        for seed in 0..10 {
            let cfg = TreeConfig {
                threshold_mode: ThresholdMode::Random,
                seed,
                ..TreeConfig::default()
            };
            let tree = fit_tree(&x, Targets::Labels(&y), &cfg).unwrap();
            for node in &tree.nodes {
                if let Node::Split { feature, .. } = node {
                    assert_ne!(*feature, 0);
                }
            }
        }
    }
}
