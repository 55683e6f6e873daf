//! A sequential layer chain with recorded activations and exact
//! reverse-mode differentiation.

use serde::{Deserialize, Serialize};

use super::layers::{Aux, Layer, LayerSpec, Mode, ParamGrad};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seeding::{mix, rng};

/// Ordered layer chain; the only network topology supported.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Everything recorded during a forward pass that backward needs.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `values[0]` is the input; `values[i+1]` is layer i's output.
    pub values: Vec<Tensor>,
    pub aux: Vec<Aux>,
}

impl Activations {
    pub fn output(&self) -> &Tensor {
        self.values
            .last()
            .expect("forward records at least the input")
    }
}

/// Per-layer parameter gradients, `None` for parameterless layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub by_layer: Vec<Option<ParamGrad>>,
}

/// Network architecture as serializable configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
}

impl Network {
    /// Build and Xavier-initialize a network; each layer draws from its own
    /// seeded stream so inserting a layer does not shift its neighbors.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Network> {
        let layers = config
            .layers
            .iter()
            .enumerate()
            .map(|(i, spec)| Layer::init(spec, &mut rng(mix(seed, i as u64))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network { layers })
    }

    pub fn config(&self) -> NetworkConfig {
        NetworkConfig {
            layers: self.layers.iter().map(|l| l.spec()).collect(),
        }
    }

    /// Run the chain, recording every intermediate tensor. Dropout draws
    /// from a per-layer stream derived from `seed`; eval mode ignores it.
    pub fn forward(&self, input: &Tensor, mode: Mode, seed: u64) -> Result<Activations> {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        values.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut layer_rng = rng(mix(seed, i as u64));
            let x = values.last().expect("non-empty");
            let (y, a) = layer.forward(x, mode, &mut layer_rng, i)?;
            values.push(y);
            aux.push(a);
        }
        Ok(Activations { values, aux })
    }

    /// Reverse-mode sweep from `dout` (gradient at the network output) back
    /// to the input; returns parameter gradients and the input gradient.
    pub fn backward(&self, acts: &Activations, dout: Tensor) -> Result<(Gradients, Tensor)> {
        if acts.values.len() != self.layers.len() + 1 {
            return Err(Error::Invalid(
                "activations do not match this network's layer count".into(),
            ));
        }
        let mut by_layer = vec![None; self.layers.len()];
        let mut grad = dout;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &acts.values[i];
            let y = &acts.values[i + 1];
            let (dx, param_grad) = layer.backward(x, y, &grad, &acts.aux[i])?;
            by_layer[i] = param_grad;
            grad = dx;
        }
        Ok((Gradients { by_layer }, grad))
    }

    /// Indices of layers that carry parameters.
    pub fn param_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .filter_map(|l| l.params())
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn dense_net(weights: Vec<f64>, input: usize, output: usize) -> Network {
        Network {
            layers: vec![Layer::Dense {
                weights: Tensor::from_values(&[input, output], weights).unwrap(),
                bias: Tensor::zeros(&[output]),
            }],
        }
    }

    #[test]
    fn zero_weight_dense_outputs_zero() {
        let net = dense_net(vec![0.0; 6], 3, 2);
        let x = Tensor::from_values(&[2, 3], vec![1.0, -2.0, 3.0, 4.0, 5.0, -6.0]).unwrap();
        let acts = net.forward(&x, Mode::Eval, 0).unwrap();
        assert!(acts.output().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let net = dense_net(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let x = Tensor::from_values(&[3, 2], vec![1.0, 2.0, -3.0, 4.0, 0.5, -0.5]).unwrap();
        let acts = net.forward(&x, Mode::Eval, 0).unwrap();
        assert_eq!(acts.output().values, x.values);
    }

    #[test]
    fn dropout_eval_is_identity_at_any_rate() {
        let net = Network {
            layers: vec![Layer::Dropout { rate: 0.5 }],
        };
        let x = Tensor::from_values(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let acts = net.forward(&x, Mode::Eval, 123).unwrap();
        assert_eq!(acts.output().values, x.values);
    }

    #[test]
    fn dropout_train_zeroes_and_rescales() {
        let net = Network {
            layers: vec![Layer::Dropout { rate: 0.25 }],
        };
        let n = 40_000usize;
        let x = Tensor::from_values(&[1, n], vec![1.0; n]).unwrap();
        let acts = net.forward(&x, Mode::Train, 5).unwrap();
        let out = &acts.output().values;
        let scale = 1.0 / 0.75;
        let dropped = out.iter().filter(|&&v| v == 0.0).count();
        assert!(out.iter().all(|&v| v == 0.0 || (v - scale).abs() < 1e-12));
        // Binomial(40000, 0.25): mean 10000, sd ~86.6; allow 6 sigma.
        let dev = (dropped as f64 - 0.25 * n as f64).abs();
        assert!(dev < 520.0, "dropped {dropped} of {n}");
    }

    #[test]
    fn forward_is_deterministic_given_seed() {
        let config = NetworkConfig {
            layers: vec![
                LayerSpec::Dense {
                    input: 4,
                    output: 8,
                },
                LayerSpec::Relu,
                LayerSpec::Dropout { rate: 0.3 },
                LayerSpec::Dense {
                    input: 8,
                    output: 2,
                },
            ],
        };
        let net = Network::init(&config, 77).unwrap();
        let x = Tensor::from_values(&[2, 4], (0..8).map(|v| v as f64 / 4.0).collect()).unwrap();
        let a = net.forward(&x, Mode::Train, 9).unwrap();
        let b = net.forward(&x, Mode::Train, 9).unwrap();
        let c = net.forward(&x, Mode::Train, 10).unwrap();
        assert_eq!(a.output().values, b.output().values);
        assert_ne!(a.output().values, c.output().values);
    }

    #[test]
    fn init_is_deterministic() {
        let config = NetworkConfig {
            layers: vec![
                LayerSpec::Dense {
                    input: 3,
                    output: 5,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    input: 5,
                    output: 2,
                },
            ],
        };
        let a = Network::init(&config, 1).unwrap();
        let b = Network::init(&config, 1).unwrap();
        let c = Network::init(&config, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.config(), config);
        assert_eq!(a.num_params(), 3 * 5 + 5 + 5 * 2 + 2);
    }

    #[test]
    fn dense_shape_mismatch_names_layer() {
        let net = dense_net(vec![0.0; 6], 3, 2);
        let x = Tensor::from_values(&[2, 4], vec![0.0; 8]).unwrap();
        match net.forward(&x, Mode::Eval, 0) {
            Err(Error::ShapeMismatch { context, .. }) => {
                assert!(context.contains("dense layer 0"), "context: {context}")
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn flatten_collapses_trailing_dimensions() {
        let net = Network {
            layers: vec![Layer::Flatten],
        };
        let x = Tensor::from_values(&[2, 1, 2, 2], (0..8).map(f64::from).collect()).unwrap();
        let acts = net.forward(&x, Mode::Eval, 0).unwrap();
        assert_eq!(acts.output().shape, vec![2, 4]);
        assert_eq!(acts.output().values, x.values);
    }

    #[test]
    fn backward_through_identity_dense_passes_gradient() {
        let net = dense_net(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let x = Tensor::from_values(&[1, 2], vec![3.0, -1.0]).unwrap();
        let acts = net.forward(&x, Mode::Eval, 0).unwrap();
        let dout = Tensor::from_values(&[1, 2], vec![0.5, 2.0]).unwrap();
        let (grads, dx) = net.backward(&acts, dout).unwrap();
        assert_eq!(dx.values, vec![0.5, 2.0]);
        let pg = grads.by_layer[0].as_ref().unwrap();
        // dW = x^T dout
        assert_eq!(pg.weights.values, vec![1.5, 6.0, -0.5, -2.0]);
        assert_eq!(pg.bias.values, vec![0.5, 2.0]);
    }
}
