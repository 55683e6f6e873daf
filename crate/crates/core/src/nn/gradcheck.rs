//! Central finite-difference verification of the analytic gradients.

use rand::seq::SliceRandom;

use super::layers::Mode;
use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seeding::rng;

/// Worst relative error over the sampled parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// One parameter coordinate: (layer index, bias flag, flat element index).
type Slot = (usize, bool, usize);

fn param_slots(net: &Network) -> Vec<Slot> {
    let mut slots = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        if let Some((w, b)) = layer.params() {
            slots.extend((0..w.len()).map(|k| (i, false, k)));
            slots.extend((0..b.len()).map(|k| (i, true, k)));
        }
    }
    slots
}

fn param_value(net: &mut Network, slot: Slot) -> &mut f64 {
    let (layer, is_bias, idx) = slot;
    let (w, b) = net.layers[layer]
        .params_mut()
        .expect("slot points at a parameterized layer");
    if is_bias {
        &mut b.values[idx]
    } else {
        &mut w.values[idx]
    }
}

/// True when no piecewise boundary sits within `clearance` of the
/// eval-mode activations: every ReLU input is at least `clearance` from
/// zero and every max-pool window has a unique maximum winning by at least
/// `clearance`. Central differences are only trustworthy at such points;
/// callers skip configurations where this fails and draw another.
pub fn probe_safe(net: &Network, input: &Tensor, clearance: f64) -> Result<bool> {
    let acts = net.forward(input, Mode::Eval, 0)?;
    for (i, layer) in net.layers.iter().enumerate() {
        let x = &acts.values[i];
        match layer {
            super::layers::Layer::Relu => {
                if x.values.iter().any(|v| v.abs() < clearance) {
                    return Ok(false);
                }
            }
            super::layers::Layer::MaxPool2d { window } => {
                let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
                for b in 0..n {
                    for ch in 0..c {
                        for oi in 0..h / window {
                            for oj in 0..w / window {
                                let mut vals: Vec<f64> = (0..window * window)
                                    .map(|k| {
                                        let (ki, kj) = (k / window, k % window);
                                        x.values[((b * c + ch) * h + oi * window + ki) * w
                                            + oj * window
                                            + kj]
                                    })
                                    .collect();
                                vals.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
                                if vals.len() > 1 && vals[0] - vals[1] < clearance {
                                    return Ok(false);
                                }
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    Ok(true)
}

/// Compare analytic gradients against central differences on a random
/// sample of parameters (all of them when the network is small).
///
/// `loss` maps the network output to a scalar and its gradient with
/// respect to that output. Runs in eval mode so dropout cannot make the
/// two loss evaluations disagree.
pub fn grad_check<L>(
    net: &mut Network,
    input: &Tensor,
    loss: L,
    eps: f64,
    min_samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    L: Fn(&Tensor) -> Result<(f64, Tensor)>,
{
    if eps <= 0.0 {
        return Err(Error::InvalidParameter("gradcheck eps must be > 0".into()));
    }
    let acts = net.forward(input, Mode::Eval, 0)?;
    let (_, dout) = loss(acts.output())?;
    let (grads, _) = net.backward(&acts, dout)?;

    let mut slots = param_slots(net);
    if slots.is_empty() {
        return Err(Error::Invalid("network has no parameters to check".into()));
    }
    let target = min_samples.min(slots.len());
    if target < slots.len() {
        slots.shuffle(&mut rng(seed));
        slots.truncate(target);
    }

    let mut max_rel_err = 0.0f64;
    for &slot in &slots {
        let (layer, is_bias, idx) = slot;
        let pg = grads.by_layer[layer]
            .as_ref()
            .expect("parameterized layer has gradients");
        let analytic = if is_bias {
            pg.bias.values[idx]
        } else {
            pg.weights.values[idx]
        };

        let original = *param_value(net, slot);
        *param_value(net, slot) = original + eps;
        let plus = loss(net.forward(input, Mode::Eval, 0)?.output())?.0;
        *param_value(net, slot) = original - eps;
        let minus = loss(net.forward(input, Mode::Eval, 0)?.output())?.0;
        *param_value(net, slot) = original;

        let numeric = (plus - minus) / (2.0 * eps);
        // A central difference cannot resolve gradients below the rounding
        // noise of the two loss evaluations; the forward pass accumulates
        // some tens of ulps, hence the 128x allowance. Flat directions,
        // e.g. an output bias under a translation-invariant loss, would
        // otherwise compare exact zeros against pure noise.
        let resolution = plus.abs().max(minus.abs()).max(1.0) * f64::EPSILON * 128.0 / (2.0 * eps);
        if analytic.abs() <= resolution && numeric.abs() <= resolution {
            continue;
        }
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        if rel > max_rel_err {
            max_rel_err = rel;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        checked: slots.len(),
    })
}
