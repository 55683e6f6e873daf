//! Adam optimizer with bias correction, one moment pair per parameter
//! tensor.

use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, aligned with the network's
/// parameterized layers by layer index.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub step_count: u64,
    moments: Vec<Option<MomentPair>>,
}

#[derive(Debug, Clone)]
struct MomentPair {
    m_w: Tensor,
    v_w: Tensor,
    m_b: Tensor,
    v_b: Tensor,
}

impl Adam {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let moments = net
            .layers
            .iter()
            .map(|layer| {
                layer.params().map(|(w, b)| MomentPair {
                    m_w: Tensor::zeros(&w.shape),
                    v_w: Tensor::zeros(&w.shape),
                    m_b: Tensor::zeros(&b.shape),
                    v_b: Tensor::zeros(&b.shape),
                })
            })
            .collect();
        Adam {
            config,
            step_count: 0,
            moments,
        }
    }

    /// One bias-corrected update in place. Rejects non-finite gradients
    /// rather than clipping them.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients) -> Result<()> {
        if grads.by_layer.len() != net.layers.len() {
            return Err(Error::Invalid("gradients do not match the network".into()));
        }
        for (i, g) in grads.by_layer.iter().enumerate() {
            if let Some(pg) = g {
                if !pg.weights.all_finite() || !pg.bias.all_finite() {
                    return Err(Error::NonFinite(format!("gradient of layer {i}")));
                }
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);

        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (Some(pg), Some(moments)) = (&grads.by_layer[i], &mut self.moments[i]) else {
                continue;
            };
            let Some((w, b)) = layer.params_mut() else {
                continue;
            };
            update_one(
                &mut w.values,
                &pg.weights.values,
                &mut moments.m_w.values,
                &mut moments.v_w.values,
                learning_rate,
                beta1,
                beta2,
                epsilon,
                bias1,
                bias2,
            );
            update_one(
                &mut b.values,
                &pg.bias.values,
                &mut moments.m_b.values,
                &mut moments.v_b.values,
                learning_rate,
                beta1,
                beta2,
                epsilon,
                bias1,
                bias2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_one(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Layer, Mode, ParamGrad};
    use crate::nn::network::Network;

    fn scalar_net(w: f64) -> Network {
        Network {
            layers: vec![Layer::Dense {
                weights: Tensor::from_values(&[1, 1], vec![w]).unwrap(),
                bias: Tensor::zeros(&[1]),
            }],
        }
    }

    fn weight(net: &Network) -> f64 {
        net.layers[0].params().unwrap().0.values[0]
    }

    #[test]
    fn one_step_matches_hand_computed_update() {
        // w = 1, loss = w^2, grad = 2. m_hat = 2, v_hat = 4, so the step is
        // lr * 2 / (2 + 1e-8) = 0.000999999995, giving w = 0.999000000005.
        let mut net = scalar_net(1.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let grads = Gradients {
            by_layer: vec![Some(ParamGrad {
                weights: Tensor::from_values(&[1, 1], vec![2.0]).unwrap(),
                bias: Tensor::from_values(&[1], vec![0.0]).unwrap(),
            })],
        };
        adam.step(&mut net, &grads).unwrap();
        let w = weight(&net);
        assert!(w < 1.0, "step must decrease w");
        assert!((w - 0.999000000005).abs() < 1e-12, "w = {w:.15}");
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut net = scalar_net(0.75);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let grads = Gradients {
            by_layer: vec![Some(ParamGrad {
                weights: Tensor::zeros(&[1, 1]),
                bias: Tensor::zeros(&[1]),
            })],
        };
        adam.step(&mut net, &grads).unwrap();
        assert_eq!(weight(&net), 0.75);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut net = scalar_net(1.0);
        let mut adam = Adam::new(&net, AdamConfig::default());
        let grads = Gradients {
            by_layer: vec![Some(ParamGrad {
                weights: Tensor::from_values(&[1, 1], vec![f64::NAN]).unwrap(),
                bias: Tensor::zeros(&[1]),
            })],
        };
        assert!(matches!(
            adam.step(&mut net, &grads),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(adam.step_count, 0, "failed step must not advance time");
    }

    #[test]
    fn training_is_deterministic_across_instances() {
        use crate::nn::layers::LayerSpec;
        use crate::nn::losses::cross_entropy_loss;
        use crate::nn::network::NetworkConfig;

        let config = NetworkConfig {
            layers: vec![
                LayerSpec::Dense {
                    input: 3,
                    output: 8,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    input: 8,
                    output: 2,
                },
            ],
        };
        let x = Tensor::from_values(&[4, 3], (0..12).map(|v| (v as f64).sin()).collect()).unwrap();
        let labels = [0usize, 1, 0, 1];
        let mut nets = Vec::new();
        for _ in 0..2 {
            let mut net = Network::init(&config, 3).unwrap();
            let mut adam = Adam::new(&net, AdamConfig::default());
            for _ in 0..5 {
                let acts = net.forward(&x, Mode::Train, 17).unwrap();
                let (_, dout) = cross_entropy_loss(acts.output(), &labels).unwrap();
                let (grads, _) = net.backward(&acts, dout).unwrap();
                adam.step(&mut net, &grads).unwrap();
            }
            nets.push(net);
        }
        assert_eq!(nets[0], nets[1]);
    }

    #[test]
    fn adam_converges_on_a_quadratic() {
        // Minimize (w - 3)^2 by gradient; Adam should get close in a few
        // hundred steps from w = 0.
        let mut net = scalar_net(0.0);
        let mut adam = Adam::new(
            &net,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        for _ in 0..500 {
            let w = weight(&net);
            let grads = Gradients {
                by_layer: vec![Some(ParamGrad {
                    weights: Tensor::from_values(&[1, 1], vec![2.0 * (w - 3.0)]).unwrap(),
                    bias: Tensor::zeros(&[1]),
                })],
            };
            adam.step(&mut net, &grads).unwrap();
        }
        assert!((weight(&net) - 3.0).abs() < 0.05);
    }
}
