use ndarray::{Array1, Array2, Zip};

use super::{Gradients, Network, TrainConfig};

/// Per-parameter running mean of squared gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl RmsPropState {
    pub fn new(net: &Network) -> Self {
        RmsPropState {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.biases.raw_dim())).collect(),
        }
    }
}

/// `cache <- rho * cache + (1 - rho) * g^2`,
/// `param <- param - lr * g / (sqrt(cache) + eps)`.
#[inline]
pub fn rmsprop_update(param: &mut f64, cache: &mut f64, grad: f64, lr: f64, rho: f64, eps: f64) {
    *cache = rho * *cache + (1.0 - rho) * grad * grad;
    *param -= lr * grad / (cache.sqrt() + eps);
}

/// One RMSProp step over every weight and bias. The learning rate is
/// constant (no decay).
pub fn rmsprop_step(net: &mut Network, grads: &Gradients, state: &mut RmsPropState, config: &TrainConfig) {
    let (lr, rho, eps) = (config.learning_rate, config.rho, config.epsilon);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&mut state.weights[l])
            .and(&grads.weights[l])
            .for_each(|p, c, &g| rmsprop_update(p, c, g, lr, rho, eps));
        Zip::from(&mut layer.biases)
            .and(&mut state.biases[l])
            .and(&grads.biases[l])
            .for_each(|p, c, &g| rmsprop_update(p, c, g, lr, rho, eps));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_only_decays_cache() {
        let (mut p, mut c) = (1.25, 0.5);
        rmsprop_update(&mut p, &mut c, 0.0, 0.001, 0.9, 1e-8);
        assert_eq!(p, 1.25);
        assert_eq!(c, 0.9 * 0.5);
    }

    #[test]
    fn first_step_from_fresh_cache() {
        let (mut p, mut c) = (0.0, 0.0);
        rmsprop_update(&mut p, &mut c, 1.0, 0.001, 0.9, 1e-8);
        assert!((c - 0.1).abs() < 1e-15);
        assert!((p - -0.0031622775601683824).abs() < 1e-9);
    }

    #[test]
    fn step_opposes_gradient() {
        for g in [-3.0, -1e-6, 1e-6, 2.0] {
            let (mut p, mut c) = (0.0, 0.0);
            rmsprop_update(&mut p, &mut c, g, 0.001, 0.9, 1e-8);
            assert!(p * g < 0.0);
        }
    }
}
