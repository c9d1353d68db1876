//! Dense feed-forward regressor for remaining trip time.
//!
//! He-normal initialization, LeakyReLU hidden layers with inverted dropout,
//! a linear output unit, mean squared error, RMSProp and early stopping.

mod optim;
mod scaler;
mod train;

pub use optim::{rmsprop_step, rmsprop_update, RmsPropState};
pub use scaler::Scaler;
pub use train::{fit, EpochStats, TrainConfig, TrainReport};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RegFeatures;
use crate::rng::{self, Rng};

/// Negative-side slope of the LeakyReLU.
pub const LEAKY_SLOPE: f64 = 0.3;

/// Hidden layer widths of the default regressor.
pub const DEFAULT_HIDDEN: [usize; 2] = [200, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
    Linear,
}

#[inline]
pub fn leaky_relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        LEAKY_SLOPE * z
    }
}

/// Sub-gradient of [`leaky_relu`]; the slope at exactly zero is the leaky one.
#[inline]
pub fn leaky_relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Weights ~ Normal(0, sqrt(2 / fan_in)), biases 0. Every layer but the last
/// uses LeakyReLU; the last is linear.
pub fn init_network(layer_sizes: &[usize], seed: u64) -> Result<Network> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config("a network needs at least two layer sizes".into()));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    let mut rng = rng::seeded(seed);
    let n_layers = layer_sizes.len() - 1;
    let layers = layer_sizes
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || normal.sample(&mut rng));
            Dense {
                weights,
                biases: Array1::zeros(fan_out),
                activation: if i + 1 == n_layers {
                    Activation::Linear
                } else {
                    Activation::LeakyRelu
                },
            }
        })
        .collect();
    Ok(Network { layers })
}

/// Default `inputs -> 200 -> 200 -> 1` regressor.
pub fn default_network(n_inputs: usize, seed: u64) -> Result<Network> {
    let mut sizes = vec![n_inputs];
    sizes.extend(DEFAULT_HIDDEN);
    sizes.push(1);
    init_network(&sizes, seed)
}

/// Activations kept by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pub pre_activations: Vec<Array2<f64>>,
    /// Scaled keep masks (0 or `1/(1-p)`) of each hidden layer, when dropout
    /// was applied.
    pub masks: Vec<Option<Array2<f64>>>,
    /// `m x 1` network outputs.
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Network {
    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Batched forward pass over the rows of `x`. In [`Mode::Train`] with a
    /// positive rate, each hidden unit is zeroed with probability
    /// `dropout_rate` and survivors are scaled by `1 / (1 - dropout_rate)`.
    pub fn forward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        dropout_rate: f64,
        rng: &mut Rng,
    ) -> Result<ForwardCache> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: x.ncols(),
            });
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Config(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for layer in &self.layers {
            let z = a.dot(&layer.weights.t()) + &layer.biases;
            let mut next = match layer.activation {
                Activation::Linear => z.clone(),
                Activation::LeakyRelu => z.mapv(leaky_relu),
            };
            let mask = if layer.activation == Activation::LeakyRelu
                && mode == Mode::Train
                && dropout_rate > 0.0
            {
                let keep_scale = 1.0 / (1.0 - dropout_rate);
                let mask = Array2::from_shape_simple_fn(next.raw_dim(), || {
                    if rng.random::<f64>() < dropout_rate {
                        0.0
                    } else {
                        keep_scale
                    }
                });
                next *= &mask;
                Some(mask)
            } else {
                None
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre_activations.push(z);
            masks.push(mask);
        }
        Ok(ForwardCache {
            inputs,
            pre_activations,
            masks,
            output: a,
        })
    }

    /// Infer-mode outputs for every row of `x`.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let cache = self.forward_batch(x, Mode::Infer, 0.0, &mut rng::seeded(0))?;
        Ok(cache.output.column(0).to_owned())
    }

    /// Exact gradients of `L = (1/m) * sum (yhat - y)^2` for the batch
    /// that produced `cache`.
    pub fn backward(&self, cache: &ForwardCache, targets: ArrayView1<'_, f64>) -> Gradients {
        let m = targets.len() as f64;
        let n = self.layers.len();
        let mut grad_w = Vec::with_capacity(n);
        let mut grad_b = Vec::with_capacity(n);

        let mut delta = cache.output.clone();
        Zip::from(delta.column_mut(0))
            .and(targets)
            .for_each(|d, &y| *d = 2.0 / m * (*d - y));

        for l in (0..n).rev() {
            grad_w.push(delta.t().dot(&cache.inputs[l]));
            grad_b.push(delta.sum_axis(Axis(0)));
            if l == 0 {
                break;
            }
            let mut upstream = delta.dot(&self.layers[l].weights);
            if let Some(mask) = &cache.masks[l - 1] {
                upstream *= mask;
            }
            if self.layers[l - 1].activation == Activation::LeakyRelu {
                Zip::from(&mut upstream)
                    .and(&cache.pre_activations[l - 1])
                    .for_each(|u, &z| *u *= leaky_relu_grad(z));
            }
            delta = upstream;
        }
        grad_w.reverse();
        grad_b.reverse();
        Gradients {
            weights: grad_w,
            biases: grad_b,
        }
    }
}

/// Single-vector forward pass. Returns the scalar output and the cache.
pub fn forward(
    net: &Network,
    x: &[f64],
    mode: Mode,
    dropout_rate: f64,
    seed: u64,
) -> Result<(f64, ForwardCache)> {
    let batch = ArrayView2::from_shape((1, x.len()), x)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let cache = net.forward_batch(batch, mode, dropout_rate, &mut rng::seeded(seed))?;
    Ok((cache.output[[0, 0]], cache))
}

pub fn backward(net: &Network, cache: &ForwardCache, targets: &[f64]) -> Gradients {
    net.backward(cache, ArrayView1::from(targets))
}

pub fn mse(predictions: ArrayView1<'_, f64>, targets: ArrayView1<'_, f64>) -> f64 {
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    sum / targets.len() as f64
}

/// Remaining trip time in minutes: scale, infer-mode forward, clamp at 0.
pub fn predict_duration(net: &Network, scaler: &Scaler, features: &RegFeatures) -> Result<f64> {
    let scaled = scaler.apply(features.as_slice())?;
    let (out, _) = forward(net, &scaled, Mode::Infer, 0.0, 0)?;
    Ok(out.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaky_relu_values() {
        assert_eq!(leaky_relu(-1.0), -0.3);
        assert_eq!(leaky_relu(2.0), 2.0);
        assert_eq!(leaky_relu_grad(0.0), LEAKY_SLOPE);
    }

    #[test]
    fn init_shapes_and_biases() {
        let net = init_network(&[14, 200, 200, 1], 5).unwrap();
        assert_eq!(net.layers.len(), 3);
        assert_eq!(net.layers[0].weights.dim(), (200, 14));
        assert_eq!(net.layers[2].activation, Activation::Linear);
        assert!(net.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert_eq!(net, init_network(&[14, 200, 200, 1], 5).unwrap());
        assert_ne!(net, init_network(&[14, 200, 200, 1], 6).unwrap());
    }

    #[test]
    fn he_normal_std() {
        let net = init_network(&[200, 200, 1], 1).unwrap();
        let w = &net.layers[0].weights;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.003, "mean {mean}");
        assert!((std - 0.1).abs() < 0.002, "std {std}");
    }

    #[test]
    fn bad_sizes() {
        assert!(init_network(&[3], 0).is_err());
        assert!(init_network(&[3, 0, 1], 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = init_network(&[3, 4, 1], 0).unwrap();
        for l in &mut net.layers {
            l.weights.fill(0.0);
        }
        let (y, _) = forward(&net, &[1.0, -2.0, 3.0], Mode::Train, 0.2, 9).unwrap();
        assert_eq!(y, 0.0);
    }

    #[test]
    fn no_dropout_train_equals_infer() {
        let net = init_network(&[3, 8, 8, 1], 2).unwrap();
        let x = [0.3, -0.7, 1.1];
        let (a, _) = forward(&net, &x, Mode::Train, 0.0, 1).unwrap();
        let (b, _) = forward(&net, &x, Mode::Infer, 0.0, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch() {
        let net = init_network(&[3, 4, 1], 0).unwrap();
        assert!(matches!(
            forward(&net, &[1.0], Mode::Infer, 0.0, 0),
            Err(Error::DimensionMismatch { expected: 3, actual: 1 })
        ));
    }

    #[test]
    fn perfect_fit_has_zero_gradients() {
        let net = init_network(&[2, 5, 1], 3).unwrap();
        let x = ndarray::array![[0.1, 0.2], [0.5, -1.0]];
        let cache = net.forward_batch(x.view(), Mode::Infer, 0.0, &mut rng::seeded(0)).unwrap();
        let y = cache.output.column(0).to_owned();
        let g = net.backward(&cache, y.view());
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn output_bias_gradient_closed_form() {
        let net = init_network(&[2, 5, 1], 4).unwrap();
        let x = ndarray::array![[0.1, 0.2], [0.5, -1.0], [2.0, 0.0]];
        let y = ndarray::array![1.0, -2.0, 0.5];
        let cache = net.forward_batch(x.view(), Mode::Infer, 0.0, &mut rng::seeded(0)).unwrap();
        let g = net.backward(&cache, y.view());
        let expected: f64 = cache
            .output
            .column(0)
            .iter()
            .zip(&y)
            .map(|(p, t)| 2.0 / 3.0 * (p - t))
            .sum();
        assert!((g.biases[1][0] - expected).abs() < 1e-12);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        let net = Network {
            layers: vec![
                Dense {
                    weights: Array2::zeros((100_000, 1)),
                    biases: Array1::from_elem(100_000, 1.5),
                    activation: Activation::LeakyRelu,
                },
                Dense {
                    weights: Array2::zeros((1, 100_000)),
                    biases: Array1::zeros(1),
                    activation: Activation::Linear,
                },
            ],
        };
        let (_, cache) = forward(&net, &[0.0], Mode::Train, 0.2, 17).unwrap();
        let hidden = &cache.inputs[1];
        let mean = hidden.mean().unwrap();
        assert!((mean - 1.5).abs() / 1.5 < 0.01, "mean {mean}");
        let dropped = hidden.iter().filter(|&&v| v == 0.0).count() as f64 / 1e5;
        assert!((dropped - 0.2).abs() < 0.01);
    }

    #[test]
    fn clamps_negative_duration() {
        let mut net = init_network(&[RegFeatures::LEN, 2, 1], 0).unwrap();
        for l in &mut net.layers {
            l.weights.fill(0.0);
        }
        net.layers[1].biases[0] = -12.0;
        let scaler = Scaler::fit(ndarray::Array2::<f64>::zeros((2, RegFeatures::LEN)).view()).unwrap();
        let f = RegFeatures([1.0; RegFeatures::LEN]);
        assert_eq!(predict_duration(&net, &scaler, &f).unwrap(), 0.0);
        net.layers[1].biases[0] = 90.25;
        assert_eq!(predict_duration(&net, &scaler, &f).unwrap(), 90.25);
        assert_eq!(predict_duration(&net, &scaler, &f).unwrap(), 90.25);
    }
}
