use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{mse, rmsprop_step, Mode, Network, RmsPropState};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Smallest validation-loss decrease that counts as an improvement.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            rho: 0.9,
            epsilon: 1e-8,
            batch_size: 128,
            dropout_rate: 0.2,
            max_epochs: 200,
            patience: 10,
            min_delta: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss in train mode (dropout active).
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Mini-batch RMSProp training with early stopping on validation MSE.
///
/// Rows are reshuffled every epoch from a stream seeded by `config.seed`
/// (the same stream drives dropout masks). Training stops once `patience`
/// consecutive epochs fail to improve the best validation loss by more than
/// `min_delta`, or at `max_epochs`; the weights from the best epoch are
/// returned.
pub fn fit(
    mut net: Network,
    train_x: ArrayView2<'_, f64>,
    train_y: ArrayView1<'_, f64>,
    val_x: ArrayView2<'_, f64>,
    val_y: ArrayView1<'_, f64>,
    config: &TrainConfig,
) -> Result<(Network, TrainReport)> {
    if train_x.nrows() == 0 || train_x.nrows() != train_y.len() {
        return Err(Error::InvalidInput("training set empty or misaligned".into()));
    }
    if val_x.nrows() == 0 || val_x.nrows() != val_y.len() {
        return Err(Error::InvalidInput(
            "early stopping needs a non-empty validation set".into(),
        ));
    }
    if !(config.learning_rate > 0.0) || config.batch_size == 0 {
        return Err(Error::Config("learning rate and batch size must be positive".into()));
    }

    let mut rng = rng::seeded(config.seed);
    let mut state = RmsPropState::new(&net);
    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    let mut history = Vec::new();
    let mut best = (net.clone(), f64::INFINITY, 0usize);
    let mut waited = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let bx = train_x.select(Axis(0), batch);
            let by = train_y.select(Axis(0), batch);
            let cache = net.forward_batch(bx.view(), Mode::Train, config.dropout_rate, &mut rng)?;
            loss_sum += mse(cache.output.column(0), by.view()) * batch.len() as f64;
            let grads = net.backward(&cache, by.view());
            rmsprop_step(&mut net, &grads, &mut state, config);
        }
        let val_loss = mse(net.predict_batch(val_x)?.view(), val_y);
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_x.nrows() as f64,
            val_loss,
        });
        if !val_loss.is_finite() {
            break;
        }
        if val_loss < best.1 - config.min_delta {
            best = (net.clone(), val_loss, epoch);
            waited = 0;
        } else {
            waited += 1;
            if waited >= config.patience {
                break;
            }
        }
    }

    let (net, best_val_loss, best_epoch) = best;
    Ok((
        net,
        TrainReport {
            history,
            best_epoch,
            best_val_loss,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_network, Network};
    use ndarray::{Array1, Array2};
    use rand::Rng as _;

    fn linear_data(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut r = rng::seeded(seed);
        let x = Array2::from_shape_simple_fn((n, 2), || r.random::<f64>());
        let y = x.column(0).mapv(|v| 3.0 * v + 5.0);
        (x, y)
    }

    #[test]
    fn learns_linear_target() {
        let (x, y) = linear_data(512, 1);
        let (vx, vy) = linear_data(128, 2);
        let net = init_network(&[2, 32, 32, 1], 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.003,
            dropout_rate: 0.0,
            batch_size: 32,
            max_epochs: 300,
            patience: 30,
            ..TrainConfig::default()
        };
        let (net, report) = fit(net, x.view(), y.view(), vx.view(), vy.view(), &cfg).unwrap();
        assert!(report.best_val_loss < 1e-2, "val mse {}", report.best_val_loss);
        let min = report.history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss, min);
        let again = mse(net.predict_batch(vx.view()).unwrap().view(), vy.view());
        assert!((again - report.best_val_loss).abs() < 1e-12);
    }

    #[test]
    fn zero_patience_stops_after_first_miss() {
        let (x, y) = linear_data(64, 4);
        let net = init_network(&[2, 4, 1], 0).unwrap();
        let cfg = TrainConfig {
            patience: 0,
            max_epochs: 50,
            ..TrainConfig::default()
        };
        let (_, report) = fit(net, x.view(), y.view(), x.view(), y.view(), &cfg).unwrap();
        assert!(report.history.len() <= 50);
        let first_miss = report
            .history
            .windows(2)
            .position(|w| !(w[1].val_loss < w[0].val_loss.min(f64::INFINITY) - cfg.min_delta));
        if let Some(i) = first_miss {
            assert!(report.history.len() <= i + 2);
        }
    }

    #[test]
    fn deterministic_and_rejects_empty_validation() {
        let (x, y) = linear_data(64, 5);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let run = || fit(init_network(&[2, 4, 1], 0).unwrap(), x.view(), y.view(), x.view(), y.view(), &cfg).unwrap();
        assert_eq!(run(), run());
        let empty = Array2::<f64>::zeros((0, 2));
        let empty_y = Array1::<f64>::zeros(0);
        assert!(fit(
            init_network(&[2, 4, 1], 0).unwrap(),
            x.view(),
            y.view(),
            empty.view(),
            empty_y.view(),
            &cfg
        )
        .is_err());
    }

    fn loss(net: &Network, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
        mse(net.predict_batch(x.view()).unwrap().view(), y.view())
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let mut net = init_network(if seed % 2 == 0 { &[4, 5, 1][..] } else { &[4, 6, 5, 1][..] }, seed).unwrap();
            let mut r = rng::seeded(100 + seed);
            for l in &mut net.layers {
                l.biases.mapv_inplace(|_| r.random_range(-0.5..0.5));
            }
            let x = Array2::from_shape_simple_fn((6, 4), || r.random_range(-1.0..1.0));
            let y = Array1::from_shape_simple_fn(6, || r.random_range(-2.0..2.0));
            let cache = net
                .forward_batch(x.view(), crate::neural::Mode::Infer, 0.0, &mut rng::seeded(0))
                .unwrap();
            let g = net.backward(&cache, y.view());
            for l in 0..net.layers.len() {
                for idx in 0..net.layers[l].weights.len() {
                    let (i, j) = (idx / net.layers[l].weights.ncols(), idx % net.layers[l].weights.ncols());
                    let orig = net.layers[l].weights[[i, j]];
                    net.layers[l].weights[[i, j]] = orig + h;
                    let up = loss(&net, &x, &y);
                    net.layers[l].weights[[i, j]] = orig - h;
                    let down = loss(&net, &x, &y);
                    net.layers[l].weights[[i, j]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = g.weights[l][[i, j]];
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                    assert!(rel < 1e-4 || (numeric - analytic).abs() < 1e-7, "seed {seed} layer {l}: {numeric} vs {analytic}");
                }
                for i in 0..net.layers[l].biases.len() {
                    let orig = net.layers[l].biases[i];
                    net.layers[l].biases[i] = orig + h;
                    let up = loss(&net, &x, &y);
                    net.layers[l].biases[i] = orig - h;
                    let down = loss(&net, &x, &y);
                    net.layers[l].biases[i] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = g.biases[l][i];
                    assert!((numeric - analytic).abs() < 1e-6 * numeric.abs().max(1.0), "seed {seed} bias");
                }
            }
        }
    }
}
