//! The two-stage learning procedure. Pre-training expands every sample
//! into several randomly transformed views each epoch and trains an
//! encoder-decoder pair to reconstruct the untransformed original, so the
//! encoder must learn features stable under relabeling and ablation of
//! vertices. Fine-tuning then drops the decoder and trains the encoder on
//! untransformed inputs, either through a fresh softmax head or by pulling
//! same-class representations together with a triplet objective. `embed`
//! reads representations out in eval mode, and models persist as JSON.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::{to_adjacency, AdjacencyTensor, PadMode};
use crate::corpus::{LabelTag, Representation, RepresentationSet};
use crate::error::{Error, Result};
use crate::graph::Fcg;
use crate::nn::{
    cross_entropy_loss, dtae_loss, triplet_loss, Adam, AdamConfig, Layer, LayerSpec, Mode, Network,
    NetworkConfig, Tensor,
};
use crate::seeding::{mix, mix2, rng, splitmix64};
use crate::transforms::{apply_transform, TransformKind, TransformSpec};

/// Highest model-file version this build can read.
pub const MODEL_FORMAT_VERSION: u32 = 1;

// Disjoint tags keep the seed streams for initialization, view drawing,
// shuffling, dropout, and head initialization from colliding.
const TAG_INIT: u64 = 0x11;
const TAG_VIEW: u64 = 0x22;
const TAG_SHUFFLE: u64 = 0x33;
const TAG_DROPOUT: u64 = 0x44;
const TAG_HEAD: u64 = 0x55;

/// One training or scoring sample: a padded adjacency tensor plus label
/// metadata carried through so every batch can be audited.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub label: LabelTag,
    pub tensor: AdjacencyTensor,
}

/// Build samples from labeled graphs. A missing label marks the sample as
/// unknown, which the training loops reject; a label is either a class id
/// or the literal string "unknown".
pub fn samples_from_graphs(graphs: &[Fcg], size: usize, mode: PadMode) -> Result<Vec<Sample>> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let label = match &g.label {
                Some(text) => text.parse::<LabelTag>()?,
                None => LabelTag::Unknown,
            };
            Ok(Sample {
                id: format!("g{i}"),
                label,
                tensor: to_adjacency(g, size, mode)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    Triplet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub architecture: NetworkConfig,
    /// Explicit decoder; when absent the encoder is mirrored (dense layers
    /// transposed, flattens dropped, logistic squashing appended).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder: Option<NetworkConfig>,
    /// Views per sample per epoch (M).
    pub views_per_sample: usize,
    pub transforms: Vec<TransformKind>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn new(architecture: NetworkConfig) -> Self {
        PretrainConfig {
            architecture,
            decoder: None,
            views_per_sample: 4,
            transforms: vec![TransformKind::FcgShift],
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub loss: LossKind,
    /// Required only when fine-tuning starts from scratch instead of a
    /// pre-trained encoder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<NetworkConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Triplet hinge margin; ignored for cross-entropy.
    pub margin: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl FinetuneConfig {
    pub fn new(loss: LossKind) -> Self {
        FinetuneConfig {
            loss,
            architecture: None,
            epochs: 20,
            batch_size: 32,
            margin: 0.5,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

/// A trained (or freshly initialized) model with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub encoder: Network,
    pub decoder: Option<Network>,
    pub head: Option<Network>,
    /// Class ids in head output order (sorted ascending); empty without a
    /// classifier head unless fine-tuning recorded them.
    pub class_ids: Vec<usize>,
    pub pretrain: Option<PretrainConfig>,
    pub finetune: Option<FinetuneConfig>,
    /// Per-epoch mean reconstruction loss per view.
    pub pretrain_loss_history: Vec<f64>,
    /// Per-epoch mean fine-tuning loss.
    pub finetune_loss_history: Vec<f64>,
}

impl TrainedModel {
    /// Output width of the last dense encoder layer, if any.
    pub fn representation_dim(&self) -> Option<usize> {
        self.encoder
            .layers
            .iter()
            .rev()
            .find_map(|l| match l.spec() {
                LayerSpec::Dense { output, .. } => Some(output),
                _ => None,
            })
    }

    /// Eval-mode class logits for samples; requires a classifier head.
    pub fn logits(&self, samples: &[Sample]) -> Result<Tensor> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| Error::Invalid("model has no classifier head".into()))?;
        let input = batch_input(
            samples,
            &sample_indices(samples),
            image_input(&self.encoder),
        )?;
        let reps = self.encoder.forward(&input, Mode::Eval, 0)?;
        Ok(head.forward(reps.output(), Mode::Eval, 0)?.output().clone())
    }
}

/// The small dense default: flatten, a 64-unit hidden layer, dropout, then
/// the representation layer. The dropout rate is 0.2 by default; the
/// literal flag keeps only 20% of activations instead for comparison runs.
pub fn default_architecture(
    side: usize,
    representation_dim: usize,
    literal_keep_dropout: bool,
) -> NetworkConfig {
    let rate = if literal_keep_dropout { 0.8 } else { 0.2 };
    NetworkConfig {
        layers: vec![
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: side * side,
                output: 64,
            },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate },
            LayerSpec::Dense {
                input: 64,
                output: representation_dim,
            },
        ],
    }
}

/// Mirror an encoder into a decoder: layers reversed, dense shapes
/// transposed, flattens dropped, and a final logistic squashing appended so
/// reconstructions live in [0,1]. Convolution stacks have no mechanical
/// mirror here and need an explicit decoder config.
pub fn mirrored_decoder(encoder: &NetworkConfig) -> Result<NetworkConfig> {
    let mut layers = Vec::new();
    for spec in encoder.layers.iter().rev() {
        match spec {
            LayerSpec::Dense { input, output } => layers.push(LayerSpec::Dense {
                input: *output,
                output: *input,
            }),
            LayerSpec::Flatten => {}
            LayerSpec::Conv2d { .. } | LayerSpec::MaxPool2d { .. } => return Err(Error::Invalid(
                "convolution layers have no mirrored decoder; supply an explicit decoder config"
                    .into(),
            )),
            other => layers.push(*other),
        }
    }
    layers.push(LayerSpec::Sigmoid);
    Ok(NetworkConfig { layers })
}

fn image_input(net: &Network) -> bool {
    matches!(
        net.layers.first().map(Layer::spec),
        Some(LayerSpec::Conv2d { .. }) | Some(LayerSpec::MaxPool2d { .. })
    )
}

fn image_input_config(config: &NetworkConfig) -> bool {
    matches!(
        config.layers.first(),
        Some(LayerSpec::Conv2d { .. }) | Some(LayerSpec::MaxPool2d { .. })
    )
}

fn sample_indices(samples: &[Sample]) -> Vec<usize> {
    (0..samples.len()).collect()
}

fn uniform_size(corpus: &[Sample]) -> Result<usize> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::EmptyInput("training corpus".into()))?
        .tensor
        .size;
    for s in corpus {
        if s.tensor.size != first {
            return Err(Error::shape(
                "corpus tensor size",
                &[first, first],
                &[s.tensor.size, s.tensor.size],
            ));
        }
    }
    Ok(first)
}

/// Every batch must consist of known-class samples; unknowns never reach
/// a training loop.
fn audit_batch(corpus: &[Sample], idxs: &[usize]) -> Result<()> {
    for &i in idxs {
        if corpus[i].label.is_unknown() {
            return Err(Error::UnknownLabel(format!(
                "`{}` (unknown-labeled sample in a training batch)",
                corpus[i].id
            )));
        }
    }
    Ok(())
}

/// Stack flattened adjacency tensors into a batch: [B, S*S] for dense-first
/// networks, [B, 1, S, S] when the first layer expects image planes.
fn batch_input(corpus: &[Sample], idxs: &[usize], image: bool) -> Result<Tensor> {
    let size = uniform_size(corpus)?;
    let mut values = Vec::with_capacity(idxs.len() * size * size);
    for &i in idxs {
        values.extend_from_slice(&corpus[i].tensor.data);
    }
    let shape: Vec<usize> = if image {
        vec![idxs.len(), 1, size, size]
    } else {
        vec![idxs.len(), size * size]
    };
    Tensor::from_values(&shape, values)
}

fn batch_from_tensors(tensors: &[AdjacencyTensor], image: bool) -> Result<Tensor> {
    let size = tensors[0].size;
    let mut values = Vec::with_capacity(tensors.len() * size * size);
    for t in tensors {
        values.extend_from_slice(&t.data);
    }
    let shape: Vec<usize> = if image {
        vec![tensors.len(), 1, size, size]
    } else {
        vec![tensors.len(), size * size]
    };
    Tensor::from_values(&shape, values)
}

fn check_optimizer_params(batch_size: usize, learning_rate: f64) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be finite and positive, got {learning_rate}"
        )));
    }
    Ok(())
}

/// Pre-train an encoder-decoder pair. Each epoch expands every sample into
/// `views_per_sample` freshly transformed views (kind drawn uniformly from
/// the configured list, parameters drawn per view) and minimizes the summed
/// squared reconstruction error against the untransformed original.
pub fn pretrain_dtae(corpus: &[Sample], cfg: &PretrainConfig) -> Result<TrainedModel> {
    let size = uniform_size(corpus)?;
    if cfg.views_per_sample == 0 {
        return Err(Error::InvalidParameter(
            "views_per_sample must be >= 1".into(),
        ));
    }
    if cfg.transforms.is_empty() {
        return Err(Error::InvalidParameter(
            "pretraining needs at least one transform kind".into(),
        ));
    }
    check_optimizer_params(cfg.batch_size, cfg.learning_rate)?;

    let decoder_cfg = match &cfg.decoder {
        Some(d) => d.clone(),
        None => mirrored_decoder(&cfg.architecture)?,
    };
    let encoder_len = cfg.architecture.layers.len();
    let mut combined_cfg = cfg.architecture.clone();
    combined_cfg
        .layers
        .extend(decoder_cfg.layers.iter().copied());
    let mut net = Network::init(&combined_cfg, mix(cfg.seed, TAG_INIT))?;
    let image = image_input_config(&cfg.architecture);

    let mut adam = Adam::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let n = corpus.len();
    let m = cfg.views_per_sample;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // Fresh view specs for every (sample, view) pair this epoch.
        let mut views: Vec<(usize, TransformSpec)> = Vec::with_capacity(n * m);
        for i in 0..n {
            for v in 0..m {
                let view_seed = mix2(mix(cfg.seed, TAG_VIEW), (epoch * n + i) as u64, v as u64);
                let kind = cfg.transforms[rng(view_seed).gen_range(0..cfg.transforms.len())];
                views.push((i, TransformSpec::new(kind, splitmix64(view_seed))));
            }
        }
        views.shuffle(&mut rng(mix2(mix(cfg.seed, TAG_SHUFFLE), epoch as u64, 0)));

        let mut epoch_sum = 0.0;
        for (batch_idx, chunk) in views.chunks(cfg.batch_size).enumerate() {
            let idxs: Vec<usize> = chunk.iter().map(|(i, _)| *i).collect();
            audit_batch(corpus, &idxs)?;
            let transformed: Vec<AdjacencyTensor> = chunk
                .iter()
                .map(|(i, spec)| apply_transform(spec, &corpus[*i].tensor).map(|o| o.tensor))
                .collect::<Result<_>>()?;
            let input = batch_from_tensors(&transformed, image)?;
            let targets =
                batch_input(corpus, &idxs, false)?.reshaped(&[idxs.len(), size * size])?;

            let forward_seed = mix2(mix(cfg.seed, TAG_DROPOUT), epoch as u64, batch_idx as u64);
            let acts = net.forward(&input, Mode::Train, forward_seed)?;
            let (loss, mut grads) = dtae_loss(&targets, std::slice::from_ref(acts.output()))?;
            epoch_sum += loss;
            let (gradients, _) = net.backward(&acts, grads.swap_remove(0))?;
            adam.step(&mut net, &gradients)?;
        }
        history.push(epoch_sum / (n * m) as f64);
    }

    let decoder_layers = net.layers.split_off(encoder_len);
    Ok(TrainedModel {
        encoder: net,
        decoder: Some(Network {
            layers: decoder_layers,
        }),
        head: None,
        class_ids: Vec::new(),
        pretrain: Some(cfg.clone()),
        finetune: None,
        pretrain_loss_history: history,
        finetune_loss_history: Vec::new(),
    })
}

/// Fine-tune an encoder on untransformed inputs. Cross-entropy attaches a
/// fresh dense head over the classes present in the corpus; triplet shapes
/// the representation layer directly. Passing no model trains from a
/// seeded random initialization (the no-pretraining baseline), which
/// requires `cfg.architecture`.
pub fn finetune(
    model: Option<&TrainedModel>,
    corpus: &[Sample],
    cfg: &FinetuneConfig,
) -> Result<TrainedModel> {
    uniform_size(corpus)?;
    check_optimizer_params(cfg.batch_size, cfg.learning_rate)?;
    audit_batch(corpus, &sample_indices(corpus))?;

    let mut class_ids: Vec<usize> = corpus.iter().filter_map(|s| s.label.known_id()).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    if cfg.loss == LossKind::Triplet {
        if !(cfg.margin.is_finite() && cfg.margin > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "triplet margin must be finite and positive, got {}",
                cfg.margin
            )));
        }
        if class_ids.len() < 2 {
            return Err(Error::DegenerateBatch(
                "triplet fine-tuning needs at least 2 known classes".into(),
            ));
        }
    }

    let encoder = match model {
        Some(m) => m.encoder.clone(),
        None => {
            let arch = cfg.architecture.as_ref().ok_or_else(|| {
                Error::Invalid(
                    "fine-tuning from scratch requires an architecture in the config".into(),
                )
            })?;
            Network::init(arch, mix(cfg.seed, TAG_INIT))?
        }
    };
    let encoder_len = encoder.layers.len();
    let image = image_input(&encoder);

    // Class index lookup for cross-entropy targets (head output order).
    let class_index: BTreeMap<usize, usize> = class_ids
        .iter()
        .enumerate()
        .map(|(idx, id)| (*id, idx))
        .collect();

    let mut net = encoder;
    if cfg.loss == LossKind::CrossEntropy {
        let probe = batch_input(corpus, &[0], image)?;
        let dim = net.forward(&probe, Mode::Eval, 0)?.output().cols();
        let head_spec = LayerSpec::Dense {
            input: dim,
            output: class_ids.len(),
        };
        net.layers
            .push(Layer::init(&head_spec, &mut rng(mix(cfg.seed, TAG_HEAD)))?);
    }

    let mut adam = Adam::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order = sample_indices(corpus);
        order.shuffle(&mut rng(mix2(mix(cfg.seed, TAG_SHUFFLE), epoch as u64, 0)));

        let mut epoch_sum = 0.0;
        let mut contributing = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            audit_batch(corpus, chunk)?;
            let input = batch_input(corpus, chunk, image)?;
            let forward_seed = mix2(mix(cfg.seed, TAG_DROPOUT), epoch as u64, batch_idx as u64);
            let acts = net.forward(&input, Mode::Train, forward_seed)?;

            let (loss, dout, weight) = match cfg.loss {
                LossKind::CrossEntropy => {
                    let labels: Vec<usize> = chunk
                        .iter()
                        .map(|&i| class_index[&corpus[i].label.known_id().expect("audited")])
                        .collect();
                    let (loss, grad) = cross_entropy_loss(acts.output(), &labels)?;
                    (loss, grad, chunk.len() as f64)
                }
                LossKind::Triplet => {
                    let labels: Vec<usize> = chunk
                        .iter()
                        .map(|&i| corpus[i].label.known_id().expect("audited"))
                        .collect();
                    match triplet_loss(acts.output(), &labels, cfg.margin) {
                        Ok((loss, grad)) => (loss, grad, 1.0),
                        // A batch without a valid triplet contributes no
                        // gradient; skip it rather than abort the run.
                        Err(Error::DegenerateBatch(_)) => continue,
                        Err(e) => return Err(e),
                    }
                }
            };
            epoch_sum += loss * weight;
            contributing += match cfg.loss {
                LossKind::CrossEntropy => chunk.len(),
                LossKind::Triplet => 1,
            };
            let (gradients, _) = net.backward(&acts, dout)?;
            adam.step(&mut net, &gradients)?;
        }
        if contributing == 0 && cfg.loss == LossKind::Triplet {
            return Err(Error::DegenerateBatch(
                "no batch contained a valid triplet; increase the batch size".into(),
            ));
        }
        history.push(if contributing == 0 {
            0.0
        } else {
            epoch_sum / contributing as f64
        });
    }

    let head_layers = net.layers.split_off(encoder_len);
    Ok(TrainedModel {
        encoder: net,
        decoder: None,
        head: (!head_layers.is_empty()).then_some(Network {
            layers: head_layers,
        }),
        class_ids,
        pretrain: model.and_then(|m| m.pretrain.clone()),
        finetune: Some(cfg.clone()),
        pretrain_loss_history: model
            .map(|m| m.pretrain_loss_history.clone())
            .unwrap_or_default(),
        finetune_loss_history: history,
    })
}

/// Eval-mode representations for a batch of samples, labels passed through.
pub fn embed(model: &TrainedModel, samples: &[Sample]) -> Result<RepresentationSet> {
    if samples.is_empty() {
        return Ok(RepresentationSet::default());
    }
    let input = batch_input(
        samples,
        &sample_indices(samples),
        image_input(&model.encoder),
    )?;
    let acts = model.encoder.forward(&input, Mode::Eval, 0)?;
    let out = acts.output();
    if !out.is_matrix() {
        return Err(Error::shape(
            "representation output",
            &[samples.len(), 0],
            &out.shape,
        ));
    }
    let dim = out.cols();
    let items = samples
        .iter()
        .enumerate()
        .map(|(i, s)| Representation {
            id: s.id.clone(),
            label: s.label,
            z: out.values[i * dim..(i + 1) * dim].to_vec(),
        })
        .collect();
    RepresentationSet::new(items)
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerEntry {
    kind: String,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rate: Option<f64>,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelConfigs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pretrain: Option<PretrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    finetune: Option<FinetuneConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    configs: ModelConfigs,
    #[serde(default)]
    class_ids: Vec<usize>,
    #[serde(default)]
    pretrain_loss_history: Vec<f64>,
    #[serde(default)]
    finetune_loss_history: Vec<f64>,
    layers: Vec<LayerEntry>,
}

fn layer_entry(layer: &Layer, role: &str) -> LayerEntry {
    let (kind, shape, rate) = match layer.spec() {
        LayerSpec::Dense { input, output } => ("dense", vec![input, output], None),
        LayerSpec::Relu => ("relu", vec![], None),
        LayerSpec::Dropout { rate } => ("dropout", vec![], Some(rate)),
        LayerSpec::Flatten => ("flatten", vec![], None),
        LayerSpec::Sigmoid => ("sigmoid", vec![], None),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => ("conv2d", vec![in_channels, out_channels, kernel], None),
        LayerSpec::MaxPool2d { window } => ("max_pool2d", vec![window], None),
    };
    let (weights, bias) = match layer.params() {
        Some((w, b)) => (Some(w.values.clone()), Some(b.values.clone())),
        None => (None, None),
    };
    LayerEntry {
        kind: kind.to_string(),
        shape,
        rate,
        role: role.to_string(),
        weights,
        bias,
    }
}

fn entry_to_layer(entry: &LayerEntry) -> Result<Layer> {
    let bad_shape = || {
        Error::Invalid(format!(
            "layer kind `{}` with shape {:?} in model file",
            entry.kind, entry.shape
        ))
    };
    let spec = match (entry.kind.as_str(), entry.shape.as_slice()) {
        ("dense", [input, output]) => LayerSpec::Dense {
            input: *input,
            output: *output,
        },
        ("relu", []) => LayerSpec::Relu,
        ("dropout", []) => LayerSpec::Dropout {
            rate: entry
                .rate
                .ok_or_else(|| Error::Invalid("dropout layer without a rate".into()))?,
        },
        ("flatten", []) => LayerSpec::Flatten,
        ("sigmoid", []) => LayerSpec::Sigmoid,
        ("conv2d", [in_channels, out_channels, kernel]) => LayerSpec::Conv2d {
            in_channels: *in_channels,
            out_channels: *out_channels,
            kernel: *kernel,
        },
        ("max_pool2d", [window]) => LayerSpec::MaxPool2d { window: *window },
        _ => return Err(bad_shape()),
    };
    let mut layer = Layer::init(&spec, &mut rng(0))?;
    if let Some((w, b)) = layer.params_mut() {
        let stored_w = entry
            .weights
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("`{}` layer missing weights", entry.kind)))?;
        let stored_b = entry
            .bias
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("`{}` layer missing bias", entry.kind)))?;
        if stored_w.len() != w.len() || stored_b.len() != b.len() {
            return Err(Error::shape(
                "stored layer parameters",
                &[w.len(), b.len()],
                &[stored_w.len(), stored_b.len()],
            ));
        }
        w.values.copy_from_slice(stored_w);
        b.values.copy_from_slice(stored_b);
    }
    Ok(layer)
}

pub fn save_model(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut layers = Vec::new();
    for l in &model.encoder.layers {
        layers.push(layer_entry(l, "encoder"));
    }
    if let Some(net) = &model.decoder {
        for l in &net.layers {
            layers.push(layer_entry(l, "decoder"));
        }
    }
    if let Some(net) = &model.head {
        for l in &net.layers {
            layers.push(layer_entry(l, "head"));
        }
    }
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        configs: ModelConfigs {
            pretrain: model.pretrain.clone(),
            finetune: model.finetune.clone(),
        },
        class_ids: model.class_ids.clone(),
        pretrain_loss_history: model.pretrain_loss_history.clone(),
        finetune_loss_history: model.finetune_loss_history.clone(),
        layers,
    };
    let text = serde_json::to_string(&file)?;
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    if file.format_version > MODEL_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: file.format_version,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let mut encoder = Vec::new();
    let mut decoder = Vec::new();
    let mut head = Vec::new();
    for entry in &file.layers {
        let layer = entry_to_layer(entry)?;
        match entry.role.as_str() {
            "encoder" => encoder.push(layer),
            "decoder" => decoder.push(layer),
            "head" => head.push(layer),
            other => {
                return Err(Error::Invalid(format!(
                    "unrecognized layer role `{other}` in model file"
                )))
            }
        }
    }
    if encoder.is_empty() {
        return Err(Error::Invalid("model file has no encoder layers".into()));
    }
    Ok(TrainedModel {
        encoder: Network { layers: encoder },
        decoder: (!decoder.is_empty()).then_some(Network { layers: decoder }),
        head: (!head.is_empty()).then_some(Network { layers: head }),
        class_ids: file.class_ids,
        pretrain: file.configs.pretrain,
        finetune: file.configs.finetune,
        pretrain_loss_history: file.pretrain_loss_history,
        finetune_loss_history: file.finetune_loss_history,
    })
}
