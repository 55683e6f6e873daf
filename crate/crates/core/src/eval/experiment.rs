//! Top-level experiment protocol: a corpus (synthetic or from disk) is
//! split into known/unknown class groups, every grid cell (pretraining
//! variant x fine-tuning loss x threshold mode) is trained and scored on
//! every split, and per-run metrics plus pooled and per-group aggregates
//! land in a JSON report with CSV and JSONL side artifacts. One failing
//! run is recorded and the rest proceed. Reports contain no timestamps or
//! environment data, so a seeded experiment is byte-reproducible.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adjacency::PadMode;
use crate::corpus::{load_corpus, save_representations, LabelTag, RepresentationSet};
use crate::error::{Error, Result};
use crate::eval::metrics::{auc_at_fpr, f1_report, Confusion};
use crate::eval::splits::{make_splits, SplitSpec};
use crate::eval::synth::{synth_corpus, SynthConfig};
use crate::graph::Fcg;
use crate::osr::{fit_class_stats, manual_threshold, OsrModel, ThresholdMode};
use crate::pipeline::{
    default_architecture, embed, finetune, pretrain_dtae, samples_from_graphs, FinetuneConfig,
    LossKind, PretrainConfig, Sample, TrainedModel,
};
use crate::seeding::{mix, mix2, rng};
use crate::transforms::TransformKind;

const TAG_SPLITS: u64 = 0x71;
const TAG_PRETRAIN: u64 = 0x72;
const TAG_FINETUNE: u64 = 0x73;
const TAG_PARTITION: u64 = 0x74;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CorpusSource {
    Synth { config: SynthConfig },
    File { path: PathBuf },
}

/// Pre-training arm of the grid: either none (random initialization) or
/// one transform kind used for all views.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainVariant {
    None,
    FcgShift,
    FcgRandom,
    NodeDropping,
    SubgraphSampling,
}

impl PretrainVariant {
    pub fn kind(self) -> Option<TransformKind> {
        match self {
            PretrainVariant::None => None,
            PretrainVariant::FcgShift => Some(TransformKind::FcgShift),
            PretrainVariant::FcgRandom => Some(TransformKind::FcgRandom),
            PretrainVariant::NodeDropping => Some(TransformKind::NodeDropping),
            PretrainVariant::SubgraphSampling => Some(TransformKind::SubgraphSampling),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PretrainVariant::None => "none",
            PretrainVariant::FcgShift => "fcg_shift",
            PretrainVariant::FcgRandom => "fcg_random",
            PretrainVariant::NodeDropping => "node_dropping",
            PretrainVariant::SubgraphSampling => "subgraph_sampling",
        }
    }
}

pub fn loss_label(loss: LossKind) -> &'static str {
    match loss {
        LossKind::CrossEntropy => "ce",
        LossKind::Triplet => "triplet",
    }
}

pub fn threshold_label(mode: ThresholdMode) -> &'static str {
    match mode {
        ThresholdMode::Statistical => "statistical",
        ThresholdMode::Manual => "manual",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub output_dir: PathBuf,
    pub pretrain_variants: Vec<PretrainVariant>,
    pub losses: Vec<LossKind>,
    pub thresholds: Vec<ThresholdMode>,
    pub known_count: usize,
    pub groups: usize,
    pub runs_per_group: usize,
    /// Fraction of each known class used for training; the rest is test.
    pub train_fraction: f64,
    /// Padded adjacency size shared by extraction and the architecture.
    pub size: usize,
    pub representation_dim: usize,
    pub literal_keep_dropout: bool,
    pub views_per_sample: usize,
    pub pretrain_epochs: usize,
    pub pretrain_batch: usize,
    pub pretrain_learning_rate: f64,
    pub finetune_epochs: usize,
    pub finetune_batch: usize,
    pub finetune_learning_rate: f64,
    pub margin: f64,
    pub manual_percentile: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    /// The pinned reference protocol: the reference synthetic corpus, the
    /// full five-by-two-by-two grid, three groups of ten runs.
    pub fn reference(output_dir: PathBuf) -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Synth {
                config: crate::eval::synth::reference_synth_config(7),
            },
            output_dir,
            pretrain_variants: vec![
                PretrainVariant::None,
                PretrainVariant::FcgShift,
                PretrainVariant::FcgRandom,
                PretrainVariant::NodeDropping,
                PretrainVariant::SubgraphSampling,
            ],
            losses: vec![LossKind::CrossEntropy, LossKind::Triplet],
            thresholds: vec![ThresholdMode::Statistical, ThresholdMode::Manual],
            known_count: 6,
            groups: 3,
            runs_per_group: 10,
            train_fraction: 0.7,
            size: 67,
            representation_dim: 6,
            literal_keep_dropout: false,
            views_per_sample: 4,
            pretrain_epochs: 10,
            pretrain_batch: 32,
            pretrain_learning_rate: 0.001,
            finetune_epochs: 3,
            finetune_batch: 32,
            finetune_learning_rate: 0.001,
            margin: 0.5,
            manual_percentile: 99.0,
            epsilon: 1e-8,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc_full: f64,
    pub auc_at_10: f64,
    pub f1_known: f64,
    pub f1_unknown: f64,
    pub f1_overall: f64,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub group: usize,
    pub run: usize,
    pub pretrain: PretrainVariant,
    pub loss: LossKind,
    pub threshold: ThresholdMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Means or standard deviations of the five scalar metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc_full: f64,
    pub auc_at_10: f64,
    pub f1_known: f64,
    pub f1_unknown: f64,
    pub f1_overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub pretrain: PretrainVariant,
    pub loss: LossKind,
    pub threshold: ThresholdMode,
    /// None pools every group; Some(g) restricts to one group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
    pub runs: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<MetricSummary>,
    /// Population standard deviation over successful runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<MetricSummary>,
}

/// Absolute difference of pooled mean overall F1 between the statistical
/// and manual threshold modes for one (pretrain, loss) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGap {
    pub pretrain: PretrainVariant,
    pub loss: LossKind,
    pub f1_overall_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<MethodAggregate>,
    pub threshold_gaps: Vec<ThresholdGap>,
}

fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.pretrain_variants.is_empty() || cfg.losses.is_empty() || cfg.thresholds.is_empty() {
        return Err(Error::InvalidParameter(
            "the method grid must have at least one variant, loss, and threshold".into(),
        ));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must be in (0, 1), got {}",
            cfg.train_fraction
        )));
    }
    if cfg.size == 0 || cfg.representation_dim == 0 {
        return Err(Error::InvalidParameter(
            "size and representation_dim must be >= 1".into(),
        ));
    }
    if let CorpusSource::Synth { config } = &cfg.corpus {
        if config.size != cfg.size {
            return Err(Error::InvalidParameter(format!(
                "synthetic corpus size {} does not match experiment size {}",
                config.size, cfg.size
            )));
        }
    }
    Ok(())
}

fn load_source(source: &CorpusSource) -> Result<Vec<Fcg>> {
    match source {
        CorpusSource::Synth { config } => synth_corpus(config),
        CorpusSource::File { path } => load_corpus(path),
    }
}

/// Every experiment sample must carry a known class label; the split, not
/// the corpus, decides which classes play unknown.
fn corpus_classes(samples: &[Sample]) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for s in samples {
        match s.label {
            LabelTag::Known(id) => ids.push(id),
            LabelTag::Unknown => {
                return Err(Error::UnknownLabel(format!(
                    "`{}` (experiment corpora must label every sample with a class id)",
                    s.id
                )))
            }
        }
    }
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidParameter(
            "experiments need at least 2 classes".into(),
        ));
    }
    Ok(ids)
}

/// Train/test partition for one split: known classes contribute
/// `train_fraction` of their samples to training (at least one each way
/// when possible); unknown-class samples are test-only with their truth
/// replaced by the unknown marker.
fn partition(
    samples: &[Sample],
    split: &SplitSpec,
    train_fraction: f64,
) -> (Vec<Sample>, Vec<Sample>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &class in &split.known {
        let mut idxs: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == LabelTag::Known(class))
            .map(|(i, _)| i)
            .collect();
        idxs.shuffle(&mut rng(mix2(split.seed, TAG_PARTITION, class as u64)));
        let count = idxs.len();
        let take = ((count as f64 * train_fraction).round() as usize)
            .max(1)
            .min(count.saturating_sub(1).max(1));
        for (pos, &i) in idxs.iter().enumerate() {
            if pos < take {
                train.push(samples[i].clone());
            } else {
                test.push(samples[i].clone());
            }
        }
    }
    for &class in &split.unknown {
        for s in samples.iter().filter(|s| s.label == LabelTag::Known(class)) {
            let mut t = s.clone();
            t.label = LabelTag::Unknown;
            test.push(t);
        }
    }
    (train, test)
}

struct ScoredRun {
    osr: OsrModel,
    train_scores: Vec<f64>,
    test_scores: Vec<f64>,
    test_reps: RepresentationSet,
    auc_full: f64,
    auc_at_10: f64,
}

fn train_and_score(
    cfg: &ExperimentConfig,
    train: &[Sample],
    test: &[Sample],
    pretrained: Option<&TrainedModel>,
    loss: LossKind,
    trainer_seed: u64,
) -> Result<ScoredRun> {
    let mut fcfg = FinetuneConfig::new(loss);
    fcfg.epochs = cfg.finetune_epochs;
    fcfg.batch_size = cfg.finetune_batch;
    fcfg.learning_rate = cfg.finetune_learning_rate;
    fcfg.margin = cfg.margin;
    fcfg.seed = trainer_seed;
    if pretrained.is_none() {
        fcfg.architecture = Some(default_architecture(
            cfg.size,
            cfg.representation_dim,
            cfg.literal_keep_dropout,
        ));
    }
    let model = finetune(pretrained, train, &fcfg)?;

    let train_reps = embed(&model, train)?;
    let test_reps = embed(&model, test)?;
    let osr = fit_class_stats(&train_reps, cfg.epsilon)?;

    let train_scores: Vec<f64> = train_reps
        .items
        .iter()
        .map(|r| osr.outlier_score(&r.z))
        .collect::<Result<_>>()?;
    let test_scores: Vec<f64> = test_reps
        .items
        .iter()
        .map(|r| osr.outlier_score(&r.z))
        .collect::<Result<_>>()?;
    let truth_unknown: Vec<bool> = test.iter().map(|s| s.label.is_unknown()).collect();
    let auc_full = auc_at_fpr(&test_scores, &truth_unknown, 1.0)?;
    let auc_at_10 = auc_at_fpr(&test_scores, &truth_unknown, 0.1)?;

    Ok(ScoredRun {
        osr,
        train_scores,
        test_scores,
        test_reps,
        auc_full,
        auc_at_10,
    })
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn score_run_artifacts(
    out_dir: &Path,
    run_id: &str,
    method_id: &str,
    scored: &ScoredRun,
    test: &[Sample],
    predictions: &[LabelTag],
    confusion: &Confusion,
) -> Result<()> {
    let confusion_path = out_dir.join(format!("confusion_{run_id}_{method_id}.json"));
    write_text(&confusion_path, &serde_json::to_string(confusion)?)?;

    let reps_path = out_dir.join(format!("reps_{run_id}_{method_id}.jsonl"));
    save_representations(&reps_path, &scored.test_reps)?;

    let mut csv = String::from("id,truth,score,predicted\n");
    for ((sample, score), pred) in test.iter().zip(&scored.test_scores).zip(predictions) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&sample.id),
            sample.label,
            score,
            pred
        ));
    }
    write_text(
        &out_dir.join(format!("scores_{run_id}_{method_id}.csv")),
        &csv,
    )
}

/// Execute the full grid for one split, returning one record per method.
/// Any stage error is recorded on the affected records; later methods
/// still run.
fn run_split(cfg: &ExperimentConfig, samples: &[Sample], split: &SplitSpec) -> Vec<RunRecord> {
    let (train, test) = partition(samples, split, cfg.train_fraction);
    let run_id = format!("g{}r{}", split.group, split.run);
    let mut records = Vec::new();

    for (vi, &variant) in cfg.pretrain_variants.iter().enumerate() {
        let pretrained: Result<Option<TrainedModel>> = match variant.kind() {
            None => Ok(None),
            Some(kind) => {
                let mut pcfg = PretrainConfig::new(default_architecture(
                    cfg.size,
                    cfg.representation_dim,
                    cfg.literal_keep_dropout,
                ));
                pcfg.views_per_sample = cfg.views_per_sample;
                pcfg.transforms = vec![kind];
                pcfg.epochs = cfg.pretrain_epochs;
                pcfg.batch_size = cfg.pretrain_batch;
                pcfg.learning_rate = cfg.pretrain_learning_rate;
                pcfg.seed = mix2(split.seed, TAG_PRETRAIN, vi as u64);
                pretrain_dtae(&train, &pcfg).map(Some)
            }
        };

        for (li, &loss) in cfg.losses.iter().enumerate() {
            let scored = pretrained
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|pre| {
                    let seed = mix2(
                        split.seed,
                        TAG_FINETUNE,
                        (vi * cfg.losses.len() + li) as u64,
                    );
                    train_and_score(cfg, &train, &test, pre.as_ref(), loss, seed)
                        .map_err(|e| e.to_string())
                });

            for &threshold in &cfg.thresholds {
                let method_id = format!(
                    "{}_{}_{}",
                    variant.label(),
                    loss_label(loss),
                    threshold_label(threshold)
                );
                let mut record = RunRecord {
                    group: split.group,
                    run: split.run,
                    pretrain: variant,
                    loss,
                    threshold,
                    threshold_value: None,
                    metrics: None,
                    error: None,
                };
                match &scored {
                    Err(e) => record.error = Some(e.clone()),
                    Ok(scored) => {
                        let outcome = (|| -> Result<(f64, MetricsReport)> {
                            let osr = match threshold {
                                ThresholdMode::Statistical => scored.osr.clone(),
                                ThresholdMode::Manual => scored.osr.clone().with_threshold(
                                    ThresholdMode::Manual,
                                    manual_threshold(&scored.train_scores, cfg.manual_percentile)?,
                                )?,
                            };
                            let predictions: Vec<LabelTag> = scored
                                .test_reps
                                .items
                                .iter()
                                .map(|r| osr.classify(&r.z))
                                .collect::<Result<_>>()?;
                            let truths: Vec<LabelTag> = test.iter().map(|s| s.label).collect();
                            let f1 = f1_report(&truths, &predictions, &split.known)?;
                            let metrics = MetricsReport {
                                auc_full: scored.auc_full,
                                auc_at_10: scored.auc_at_10,
                                f1_known: f1.f1_known,
                                f1_unknown: f1.f1_unknown,
                                f1_overall: f1.f1_overall,
                                confusion: f1.confusion,
                            };
                            score_run_artifacts(
                                &cfg.output_dir,
                                &run_id,
                                &method_id,
                                scored,
                                &test,
                                &predictions,
                                &metrics.confusion,
                            )?;
                            Ok((osr.threshold.value, metrics))
                        })();
                        match outcome {
                            Ok((value, metrics)) => {
                                record.threshold_value = Some(value);
                                record.metrics = Some(metrics);
                            }
                            Err(e) => record.error = Some(e.to_string()),
                        }
                    }
                }
                records.push(record);
            }
        }
    }
    records
}

fn summarize(values: &[&MetricsReport]) -> (MetricSummary, MetricSummary) {
    let n = values.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| values.iter().map(|m| f(m)).sum::<f64>() / n;
    let std = |f: &dyn Fn(&MetricsReport) -> f64, mu: f64| {
        (values
            .iter()
            .map(|m| (f(m) - mu) * (f(m) - mu))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let fields: [&dyn Fn(&MetricsReport) -> f64; 5] = [
        &|m| m.auc_full,
        &|m| m.auc_at_10,
        &|m| m.f1_known,
        &|m| m.f1_unknown,
        &|m| m.f1_overall,
    ];
    let means: Vec<f64> = fields.iter().map(|f| mean(f)).collect();
    let stds: Vec<f64> = fields
        .iter()
        .zip(&means)
        .map(|(f, mu)| std(f, *mu))
        .collect();
    (
        MetricSummary {
            auc_full: means[0],
            auc_at_10: means[1],
            f1_known: means[2],
            f1_unknown: means[3],
            f1_overall: means[4],
        },
        MetricSummary {
            auc_full: stds[0],
            auc_at_10: stds[1],
            f1_known: stds[2],
            f1_unknown: stds[3],
            f1_overall: stds[4],
        },
    )
}

fn aggregate(cfg: &ExperimentConfig, records: &[RunRecord]) -> Vec<MethodAggregate> {
    let mut groups: Vec<Option<usize>> = vec![None];
    groups.extend((0..cfg.groups).map(Some));

    let mut out = Vec::new();
    for &variant in &cfg.pretrain_variants {
        for &loss in &cfg.losses {
            for &threshold in &cfg.thresholds {
                for &group in &groups {
                    let matching: Vec<&RunRecord> = records
                        .iter()
                        .filter(|r| {
                            r.pretrain == variant
                                && r.loss == loss
                                && r.threshold == threshold
                                && group.is_none_or(|g| r.group == g)
                        })
                        .collect();
                    let successes: Vec<&MetricsReport> =
                        matching.iter().filter_map(|r| r.metrics.as_ref()).collect();
                    let (mean, std) = if successes.is_empty() {
                        (None, None)
                    } else {
                        let (m, s) = summarize(&successes);
                        (Some(m), Some(s))
                    };
                    out.push(MethodAggregate {
                        pretrain: variant,
                        loss,
                        threshold,
                        group,
                        runs: successes.len(),
                        failures: matching.len() - successes.len(),
                        mean,
                        std,
                    });
                }
            }
        }
    }
    out
}

fn threshold_gaps(cfg: &ExperimentConfig, aggregates: &[MethodAggregate]) -> Vec<ThresholdGap> {
    if !cfg.thresholds.contains(&ThresholdMode::Statistical)
        || !cfg.thresholds.contains(&ThresholdMode::Manual)
    {
        return Vec::new();
    }
    let pooled_mean = |variant, loss, threshold| -> Option<f64> {
        aggregates
            .iter()
            .find(|a| {
                a.pretrain == variant
                    && a.loss == loss
                    && a.threshold == threshold
                    && a.group.is_none()
            })
            .and_then(|a| a.mean.as_ref())
            .map(|m| m.f1_overall)
    };
    let mut gaps = Vec::new();
    for &variant in &cfg.pretrain_variants {
        for &loss in &cfg.losses {
            if let (Some(stat), Some(manual)) = (
                pooled_mean(variant, loss, ThresholdMode::Statistical),
                pooled_mean(variant, loss, ThresholdMode::Manual),
            ) {
                gaps.push(ThresholdGap {
                    pretrain: variant,
                    loss,
                    f1_overall_gap: (stat - manual).abs(),
                });
            }
        }
    }
    gaps
}

fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut csv = String::from(
        "group,run,pretrain,loss,threshold,threshold_value,auc_full,auc_at_10,\
         f1_known,f1_unknown,f1_overall,error\n",
    );
    for r in records {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.group,
            r.run,
            r.pretrain.label(),
            loss_label(r.loss),
            threshold_label(r.threshold),
            fmt(r.threshold_value),
            fmt(r.metrics.as_ref().map(|m| m.auc_full)),
            fmt(r.metrics.as_ref().map(|m| m.auc_at_10)),
            fmt(r.metrics.as_ref().map(|m| m.f1_known)),
            fmt(r.metrics.as_ref().map(|m| m.f1_unknown)),
            fmt(r.metrics.as_ref().map(|m| m.f1_overall)),
            csv_field(r.error.as_deref().unwrap_or("")),
        ));
    }
    write_text(path, &csv)
}

/// Run the whole grid over all splits with `jobs` worker threads and write
/// `report.json`, `runs.csv`, and per-run artifacts into the output
/// directory.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    validate_config(cfg)?;
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| Error::io(cfg.output_dir.display().to_string(), e))?;

    let corpus = load_source(&cfg.corpus)?;
    let samples = samples_from_graphs(&corpus, cfg.size, PadMode::Truncate)?;
    let classes = corpus_classes(&samples)?;
    let splits = make_splits(
        &classes,
        cfg.known_count,
        cfg.groups,
        cfg.runs_per_group,
        mix(cfg.seed, TAG_SPLITS),
    )?;

    let jobs = jobs.max(1).min(splits.len());
    let records: Vec<RunRecord> = if jobs <= 1 {
        splits
            .iter()
            .flat_map(|split| run_split(cfg, &samples, split))
            .collect()
    } else {
        // Slot-ordered collection keeps the report independent of thread
        // scheduling.
        let slots: Mutex<Vec<Option<Vec<RunRecord>>>> = Mutex::new(vec![None; splits.len()]);
        let next = AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= splits.len() {
                        break;
                    }
                    let result = run_split(cfg, &samples, &splits[i]);
                    slots.lock().expect("no poisoned slots")[i] = Some(result);
                });
            }
        });
        slots
            .into_inner()
            .expect("scope joined all workers")
            .into_iter()
            .flat_map(|r| r.expect("every split processed"))
            .collect()
    };

    let aggregates = aggregate(cfg, &records);
    let gaps = threshold_gaps(cfg, &aggregates);
    let report = ExperimentReport {
        config: cfg.clone(),
        runs: records,
        aggregates,
        threshold_gaps: gaps,
    };
    write_text(
        &cfg.output_dir.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
    )?;
    write_runs_csv(&cfg.output_dir.join("runs.csv"), &report.runs)?;
    Ok(report)
}
