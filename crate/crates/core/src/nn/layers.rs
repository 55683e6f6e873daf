//! Layer implementations: configuration specs, parameter holders, and the
//! forward/backward rules for each kind.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Architecture-level description of one layer; shapes only, no weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Flatten,
    Sigmoid,
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    MaxPool2d {
        window: usize,
    },
}

/// Train enables dropout; eval makes the whole forward pass deterministic
/// regardless of seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-layer bookkeeping the backward pass needs beyond the activations.
#[derive(Debug, Clone, PartialEq)]
pub enum Aux {
    None,
    /// Dropout: per-element multiplier (0 or 1/(1-rate)).
    Mask(Vec<f64>),
    /// Max pooling: flat input index of each output cell's maximum.
    Switches(Vec<usize>),
}

/// Weight and bias gradients for a parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub weights: Tensor,
    pub bias: Tensor,
}

/// A layer with its parameters, if any.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        weights: Tensor,
        bias: Tensor,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Flatten,
    Sigmoid,
    Conv2d {
        weights: Tensor,
        bias: Tensor,
        kernel: usize,
    },
    MaxPool2d {
        window: usize,
    },
}

impl Layer {
    /// Build a layer from its spec, Xavier-initializing any weights.
    pub fn init(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Result<Layer> {
        match *spec {
            LayerSpec::Dense { input, output } => {
                if input == 0 || output == 0 {
                    return Err(Error::InvalidParameter(
                        "dense layer dimensions must be >= 1".into(),
                    ));
                }
                Ok(Layer::Dense {
                    weights: Tensor::xavier(&[input, output], input, output, rng),
                    bias: Tensor::zeros(&[output]),
                })
            }
            LayerSpec::Relu => Ok(Layer::Relu),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidParameter(format!(
                        "dropout rate must be in [0, 1), got {rate}"
                    )));
                }
                Ok(Layer::Dropout { rate })
            }
            LayerSpec::Flatten => Ok(Layer::Flatten),
            LayerSpec::Sigmoid => Ok(Layer::Sigmoid),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel == 0 {
                    return Err(Error::InvalidParameter(
                        "conv2d dimensions must be >= 1".into(),
                    ));
                }
                let fan_in = in_channels * kernel * kernel;
                let fan_out = out_channels * kernel * kernel;
                Ok(Layer::Conv2d {
                    weights: Tensor::xavier(
                        &[out_channels, in_channels, kernel, kernel],
                        fan_in,
                        fan_out,
                        rng,
                    ),
                    bias: Tensor::zeros(&[out_channels]),
                    kernel,
                })
            }
            LayerSpec::MaxPool2d { window } => {
                if window == 0 {
                    return Err(Error::InvalidParameter("pool window must be >= 1".into()));
                }
                Ok(Layer::MaxPool2d { window })
            }
        }
    }

    /// Recover the shape-only architecture description from a built layer.
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense { weights, .. } => LayerSpec::Dense {
                input: weights.shape[0],
                output: weights.shape[1],
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Conv2d {
                weights, kernel, ..
            } => LayerSpec::Conv2d {
                in_channels: weights.shape[1],
                out_channels: weights.shape[0],
                kernel: *kernel,
            },
            Layer::MaxPool2d { window } => LayerSpec::MaxPool2d { window: *window },
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Dense { weights, bias } | Layer::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense { weights, bias } | Layer::Conv2d { weights, bias, .. } => {
                Some((weights, bias))
            }
            _ => None,
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
        layer_idx: usize,
    ) -> Result<(Tensor, Aux)> {
        match self {
            Layer::Dense { weights, bias } => {
                if !x.is_matrix() || x.cols() != weights.shape[0] {
                    return Err(Error::shape(
                        format!("dense layer {layer_idx} input"),
                        &[x.shape.first().copied().unwrap_or(0), weights.shape[0]],
                        &x.shape,
                    ));
                }
                let mut y = matmul(x, weights)?;
                let out = weights.shape[1];
                for row in y.values.chunks_mut(out) {
                    for (v, b) in row.iter_mut().zip(&bias.values) {
                        *v += b;
                    }
                }
                Ok((y, Aux::None))
            }
            Layer::Relu => {
                let mut y = x.clone();
                for v in &mut y.values {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                Ok((y, Aux::None))
            }
            Layer::Dropout { rate } => match mode {
                Mode::Eval => Ok((x.clone(), Aux::None)),
                Mode::Train => {
                    let keep_scale = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.gen_bool(*rate) { 0.0 } else { keep_scale })
                        .collect();
                    let mut y = x.clone();
                    for (v, m) in y.values.iter_mut().zip(&mask) {
                        *v *= m;
                    }
                    Ok((y, Aux::Mask(mask)))
                }
            },
            Layer::Flatten => {
                if x.shape.is_empty() {
                    return Err(Error::shape(
                        format!("flatten layer {layer_idx} input"),
                        &[1],
                        &x.shape,
                    ));
                }
                let n = x.shape[0];
                let rest: usize = x.shape[1..].iter().product();
                Ok((x.reshaped(&[n, rest])?, Aux::None))
            }
            Layer::Sigmoid => {
                let mut y = x.clone();
                for v in &mut y.values {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                Ok((y, Aux::None))
            }
            Layer::Conv2d {
                weights,
                bias,
                kernel,
            } => conv2d_forward(x, weights, bias, *kernel, layer_idx),
            Layer::MaxPool2d { window } => maxpool_forward(x, *window, layer_idx),
        }
    }

    /// Gradient of the loss with respect to this layer's input and
    /// parameters, given `dy` with respect to its output.
    pub fn backward(
        &self,
        x: &Tensor,
        y: &Tensor,
        dy: &Tensor,
        aux: &Aux,
    ) -> Result<(Tensor, Option<ParamGrad>)> {
        match self {
            Layer::Dense { weights, .. } => {
                let dx = matmul_nt(dy, weights)?;
                let dw = matmul_tn(x, dy)?;
                let out = weights.shape[1];
                let mut db = Tensor::zeros(&[out]);
                for row in dy.values.chunks(out) {
                    for (acc, v) in db.values.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                Ok((
                    dx,
                    Some(ParamGrad {
                        weights: dw,
                        bias: db,
                    }),
                ))
            }
            Layer::Relu => {
                let mut dx = dy.clone();
                for (g, v) in dx.values.iter_mut().zip(&x.values) {
                    if *v <= 0.0 {
                        *g = 0.0;
                    }
                }
                Ok((dx, None))
            }
            Layer::Dropout { .. } => match aux {
                Aux::Mask(mask) => {
                    let mut dx = dy.clone();
                    for (g, m) in dx.values.iter_mut().zip(mask) {
                        *g *= m;
                    }
                    Ok((dx, None))
                }
                _ => Ok((dy.clone(), None)),
            },
            Layer::Flatten => Ok((dy.reshaped(&x.shape)?, None)),
            Layer::Sigmoid => {
                let mut dx = dy.clone();
                for (g, s) in dx.values.iter_mut().zip(&y.values) {
                    *g *= s * (1.0 - s);
                }
                Ok((dx, None))
            }
            Layer::Conv2d {
                weights, kernel, ..
            } => conv2d_backward(x, weights, *kernel, dy),
            Layer::MaxPool2d { .. } => match aux {
                Aux::Switches(switches) => {
                    let mut dx = Tensor::zeros(&x.shape);
                    for (out_idx, &in_idx) in switches.iter().enumerate() {
                        dx.values[in_idx] += dy.values[out_idx];
                    }
                    Ok((dx, None))
                }
                _ => Err(Error::Invalid("max pool backward without switches".into())),
            },
        }
    }
}

fn expect_4d(x: &Tensor, context: String) -> Result<(usize, usize, usize, usize)> {
    if x.shape.len() != 4 {
        return Err(Error::shape(context, &[0, 0, 0, 0], &x.shape));
    }
    Ok((x.shape[0], x.shape[1], x.shape[2], x.shape[3]))
}

/// Valid (unpadded) stride-1 cross-correlation, the usual conv layer.
fn conv2d_forward(
    x: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    kernel: usize,
    layer_idx: usize,
) -> Result<(Tensor, Aux)> {
    let (n, ic, h, w) = expect_4d(x, format!("conv layer {layer_idx} input"))?;
    let oc = weights.shape[0];
    if weights.shape[1] != ic || h < kernel || w < kernel {
        return Err(Error::shape(
            format!("conv layer {layer_idx} input"),
            &[n, weights.shape[1], kernel, kernel],
            &x.shape,
        ));
    }
    let (oh, ow) = (h - kernel + 1, w - kernel + 1);
    let mut y = Tensor::zeros(&[n, oc, oh, ow]);
    let xi = |b: usize, c: usize, i: usize, j: usize| x.values[((b * ic + c) * h + i) * w + j];
    let wi = |o: usize, c: usize, i: usize, j: usize| {
        weights.values[((o * ic + c) * kernel + i) * kernel + j]
    };
    for b in 0..n {
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = bias.values[o];
                    for c in 0..ic {
                        for ki in 0..kernel {
                            for kj in 0..kernel {
                                acc += xi(b, c, i + ki, j + kj) * wi(o, c, ki, kj);
                            }
                        }
                    }
                    y.values[((b * oc + o) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    Ok((y, Aux::None))
}

fn conv2d_backward(
    x: &Tensor,
    weights: &Tensor,
    kernel: usize,
    dy: &Tensor,
) -> Result<(Tensor, Option<ParamGrad>)> {
    let (n, ic, h, w) = expect_4d(x, "conv backward input".into())?;
    let (_, oc, oh, ow) = expect_4d(dy, "conv backward upstream".into())?;
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&weights.shape);
    let mut db = Tensor::zeros(&[oc]);
    let xi = |b: usize, c: usize, i: usize, j: usize| x.values[((b * ic + c) * h + i) * w + j];
    let wi = |o: usize, c: usize, i: usize, j: usize| {
        weights.values[((o * ic + c) * kernel + i) * kernel + j]
    };
    for b in 0..n {
        for o in 0..oc {
            for i in 0..oh {
                for j in 0..ow {
                    let g = dy.values[((b * oc + o) * oh + i) * ow + j];
                    if g == 0.0 {
                        continue;
                    }
                    db.values[o] += g;
                    for c in 0..ic {
                        for ki in 0..kernel {
                            for kj in 0..kernel {
                                dw.values[((o * ic + c) * kernel + ki) * kernel + kj] +=
                                    g * xi(b, c, i + ki, j + kj);
                                dx.values[((b * ic + c) * h + i + ki) * w + j + kj] +=
                                    g * wi(o, c, ki, kj);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((
        dx,
        Some(ParamGrad {
            weights: dw,
            bias: db,
        }),
    ))
}

/// Non-overlapping max pooling; spatial dimensions must divide evenly.
fn maxpool_forward(x: &Tensor, window: usize, layer_idx: usize) -> Result<(Tensor, Aux)> {
    let (n, c, h, w) = expect_4d(x, format!("pool layer {layer_idx} input"))?;
    if h % window != 0 || w % window != 0 {
        return Err(Error::shape(
            format!("pool layer {layer_idx} input"),
            &[n, c, h / window.max(1) * window, w / window.max(1) * window],
            &x.shape,
        ));
    }
    let (oh, ow) = (h / window, w / window);
    let mut y = Tensor::zeros(&[n, c, oh, ow]);
    let mut switches = vec![0usize; y.len()];
    for b in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for ki in 0..window {
                        for kj in 0..window {
                            let idx = ((b * c + ch) * h + i * window + ki) * w + j * window + kj;
                            if x.values[idx] > best {
                                best = x.values[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let out_idx = ((b * c + ch) * oh + i) * ow + j;
                    y.values[out_idx] = best;
                    switches[out_idx] = best_idx;
                }
            }
        }
    }
    Ok((y, Aux::Switches(switches)))
}
