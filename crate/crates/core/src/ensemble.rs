//! Hard-voting combination of the four base classifiers, and grid search
//! over their hyperparameters.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{
    fit_extra_trees, fit_gbdt, fit_random_forest, fit_xgb, BoostParams, Classifier, ForestModel,
    GbdtModel, Matrix, TreeConfig, XgbModel, XgbParams,
};

/// Most frequent code; ties go to the lowest of the tied codes.
pub fn hard_vote(votes: &[u32]) -> Result<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(u32, usize)> = None;
    // BTreeMap iterates ascending, so a strict `>` keeps the lowest code.
    for (code, n) in counts {
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((code, n));
        }
    }
    best.map(|(code, _)| code)
        .ok_or_else(|| Error::InvalidInput("hard vote over zero votes".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub rf_trees: usize,
    pub ert_trees: usize,
    pub gbdt: BoostParams,
    pub xgb: XgbParams,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            rf_trees: 100,
            ert_trees: 100,
            gbdt: BoostParams::default(),
            xgb: XgbParams::default(),
            seed: 0,
        }
    }
}

/// RF, GBDT, XGB and ERT fitted on the same rows and label codes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingEnsemble {
    pub rf: ForestModel,
    pub gbdt: GbdtModel,
    pub xgb: XgbModel,
    pub ert: ForestModel,
}

pub const MEMBER_NAMES: [&str; 4] = ["rf", "gbdt", "xgb", "ert"];

fn forest_config(n_features: usize, seed: u64) -> TreeConfig {
    TreeConfig::random_forest(n_features, seed)
}

fn fit_rf(x: &Matrix, y: &[u32], trees: usize, seed: u64) -> Result<ForestModel> {
    fit_random_forest(x, y, trees, &forest_config(x.n_cols(), seed))
}

fn fit_ert(x: &Matrix, y: &[u32], trees: usize, seed: u64) -> Result<ForestModel> {
    fit_extra_trees(x, y, trees, &forest_config(x.n_cols(), seed))
}

pub fn fit_voting_ensemble(x: &Matrix, y: &[u32], config: &EnsembleConfig) -> Result<VotingEnsemble> {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::DegenerateClassification(format!(
            "{} distinct label(s) in the training set",
            classes.len()
        )));
    }
    let ((rf, ert), (gbdt, xgb)) = rayon::join(
        || {
            rayon::join(
                || fit_rf(x, y, config.rf_trees, config.seed),
                || fit_ert(x, y, config.ert_trees, config.seed),
            )
        },
        || rayon::join(|| fit_gbdt(x, y, &config.gbdt), || fit_xgb(x, y, &config.xgb)),
    );
    Ok(VotingEnsemble {
        rf: rf?,
        gbdt: gbdt?,
        xgb: xgb?,
        ert: ert?,
    })
}

impl VotingEnsemble {
    /// Member argmax labels in [`MEMBER_NAMES`] order.
    pub fn votes(&self, x: &[f64]) -> [u32; 4] {
        [
            self.rf.predict(x),
            self.gbdt.predict(x),
            self.xgb.predict(x),
            self.ert.predict(x),
        ]
    }

    pub fn predict(&self, x: &[f64]) -> u32 {
        hard_vote(&self.votes(x)).expect("four votes")
    }

    pub fn accuracy(&self, x: &Matrix, y: &[u32]) -> f64 {
        let hits = x.rows().zip(y).filter(|(r, &l)| self.predict(r) == l).count();
        hits as f64 / y.len().max(1) as f64
    }

    /// Per-member accuracies in [`MEMBER_NAMES`] order.
    pub fn member_accuracies(&self, x: &Matrix, y: &[u32]) -> [f64; 4] {
        [
            self.rf.accuracy(x, y),
            self.gbdt.accuracy(x, y),
            self.xgb.accuracy(x, y),
            self.ert.accuracy(x, y),
        ]
    }
}

/// Candidate values per model. Boosting grids are the cartesian product of
/// their lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub rf_trees: Vec<usize>,
    pub ert_trees: Vec<usize>,
    pub gbdt_depth: Vec<usize>,
    pub gbdt_eta: Vec<f64>,
    pub gbdt_rounds: Vec<usize>,
    pub xgb_depth: Vec<usize>,
    pub xgb_eta: Vec<f64>,
    pub xgb_rounds: Vec<usize>,
    pub xgb_lambda: Vec<f64>,
    pub xgb_gamma: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        ParamGrid {
            rf_trees: vec![50, 100, 200],
            ert_trees: vec![50, 100, 200],
            gbdt_depth: vec![3, 5],
            gbdt_eta: vec![0.05, 0.1],
            gbdt_rounds: vec![50, 100],
            xgb_depth: vec![3, 5],
            xgb_eta: vec![0.05, 0.1],
            xgb_rounds: vec![50, 100],
            xgb_lambda: vec![1.0],
            xgb_gamma: vec![0.0],
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        })
        .collect()
}

impl ParamGrid {
    /// Reads `model.param=v1,v2,...` lines over the defaults. Blank lines and
    /// `#` comments are skipped.
    ///
    /// Keys: `rf.trees`, `ert.trees`, `gbdt.{depth,eta,rounds}`,
    /// `xgb.{depth,eta,rounds,lambda,gamma}`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = ParamGrid::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let key = key.trim();
            match key {
                "rf.trees" => grid.rf_trees = parse_list(key, value)?,
                "ert.trees" => grid.ert_trees = parse_list(key, value)?,
                "gbdt.depth" => grid.gbdt_depth = parse_list(key, value)?,
                "gbdt.eta" => grid.gbdt_eta = parse_list(key, value)?,
                "gbdt.rounds" => grid.gbdt_rounds = parse_list(key, value)?,
                "xgb.depth" => grid.xgb_depth = parse_list(key, value)?,
                "xgb.eta" => grid.xgb_eta = parse_list(key, value)?,
                "xgb.rounds" => grid.xgb_rounds = parse_list(key, value)?,
                "xgb.lambda" => grid.xgb_lambda = parse_list(key, value)?,
                "xgb.gamma" => grid.xgb_gamma = parse_list(key, value)?,
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(grid)
    }

    /// Every candidate in enumeration order: RF, GBDT, XGB, ERT.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out: Vec<Candidate> = self.rf_trees.iter().map(|&t| Candidate::Rf(t)).collect();
        for &max_depth in &self.gbdt_depth {
            for &learning_rate in &self.gbdt_eta {
                for &rounds in &self.gbdt_rounds {
                    out.push(Candidate::Gbdt(BoostParams {
                        rounds,
                        max_depth,
                        learning_rate,
                    }));
                }
            }
        }
        for &max_depth in &self.xgb_depth {
            for &learning_rate in &self.xgb_eta {
                for &rounds in &self.xgb_rounds {
                    for &lambda in &self.xgb_lambda {
                        for &gamma in &self.xgb_gamma {
                            out.push(Candidate::Xgb(XgbParams {
                                rounds,
                                max_depth,
                                learning_rate,
                                lambda,
                                gamma,
                            }));
                        }
                    }
                }
            }
        }
        out.extend(self.ert_trees.iter().map(|&t| Candidate::Ert(t)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Candidate {
    Rf(usize),
    Gbdt(BoostParams),
    Xgb(XgbParams),
    Ert(usize),
}

impl Candidate {
    pub fn model(&self) -> &'static str {
        match self {
            Candidate::Rf(_) => "rf",
            Candidate::Gbdt(_) => "gbdt",
            Candidate::Xgb(_) => "xgb",
            Candidate::Ert(_) => "ert",
        }
    }

    fn score(&self, train: (&Matrix, &[u32]), val: (&Matrix, &[u32]), seed: u64) -> Result<f64> {
        let (x, y) = train;
        Ok(match self {
            Candidate::Rf(t) => fit_rf(x, y, *t, seed)?.accuracy(val.0, val.1),
            Candidate::Ert(t) => fit_ert(x, y, *t, seed)?.accuracy(val.0, val.1),
            Candidate::Gbdt(p) => fit_gbdt(x, y, p)?.accuracy(val.0, val.1),
            Candidate::Xgb(p) => fit_xgb(x, y, p)?.accuracy(val.0, val.1),
        })
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Candidate::Rf(t) | Candidate::Ert(t) => write!(f, "trees={t}"),
            Candidate::Gbdt(p) => write!(f, "depth={};eta={};rounds={}", p.max_depth, p.learning_rate, p.rounds),
            Candidate::Xgb(p) => write!(
                f,
                "depth={};eta={};rounds={};lambda={};gamma={}",
                p.max_depth, p.learning_rate, p.rounds, p.lambda, p.gamma
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub model: String,
    pub config: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: EnsembleConfig,
    pub scores: Vec<GridScore>,
}

/// Scores every candidate by held-out accuracy and keeps, per model, the
/// first candidate with the highest score.
pub fn grid_search(
    grid: &ParamGrid,
    train: (&Matrix, &[u32]),
    held_out: (&Matrix, &[u32]),
    seed: u64,
) -> Result<GridResult> {
    let candidates = grid.candidates();
    for model in MEMBER_NAMES {
        if !candidates.iter().any(|c| c.model() == model) {
            return Err(Error::Config(format!("grid has no candidates for {model}")));
        }
    }
    if held_out.0.n_rows() == 0 {
        return Err(Error::InvalidInput("grid search needs held-out rows".into()));
    }
    let accuracies: Vec<f64> = candidates
        .par_iter()
        .map(|c| c.score(train, held_out, seed))
        .collect::<Result<_>>()?;

    let mut best = EnsembleConfig {
        seed,
        ..EnsembleConfig::default()
    };
    let mut best_score: BTreeMap<&str, f64> = BTreeMap::new();
    for (c, &acc) in candidates.iter().zip(&accuracies) {
        let slot = best_score.entry(c.model()).or_insert(f64::NEG_INFINITY);
        if acc > *slot {
            *slot = acc;
            match c {
                Candidate::Rf(t) => best.rf_trees = *t,
                Candidate::Ert(t) => best.ert_trees = *t,
                Candidate::Gbdt(p) => best.gbdt = p.clone(),
                Candidate::Xgb(p) => best.xgb = p.clone(),
            }
        }
    }
    let scores = candidates
        .iter()
        .zip(accuracies)
        .map(|(c, accuracy)| GridScore {
            model: c.model().to_string(),
            config: c.to_string(),
            accuracy,
        })
        .collect();
    Ok(GridResult { best, scores })
}

/// Score table as CSV `model,config,accuracy`.
pub fn write_scores_csv<W: Write>(writer: W, scores: &[GridScore]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "config", "accuracy"])?;
    for s in scores {
        w.write_record([s.model.as_str(), s.config.as_str(), &s.accuracy.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("grid scores", e))?;
    Ok(())
}
