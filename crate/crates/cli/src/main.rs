//! Command-line front end for the open-set FCG pipeline. Every
//! subcommand is seeded and writes deterministic output files, so any
//! invocation can be replayed byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fcg_osr::adjacency::PadMode;
use fcg_osr::corpus::{
    load_corpus, load_representations, save_corpus, save_representations, LabelTag,
};
use fcg_osr::eval::experiment::{run_experiment, ExperimentConfig};
use fcg_osr::eval::metrics::{auc_at_fpr, f1_report};
use fcg_osr::eval::splits::make_splits;
use fcg_osr::eval::synth::{reference_synth_config, synth_corpus, SynthConfig};
use fcg_osr::extract::{extract_fcg, ExtractConfig};
use fcg_osr::osr::{
    fit_class_stats, load_osr, manual_threshold, save_osr, OsrModel, ThresholdMode, DEFAULT_EPSILON,
};
use fcg_osr::pipeline::{
    default_architecture, embed, finetune, load_model, pretrain_dtae, samples_from_graphs,
    save_model, FinetuneConfig, LossKind, PretrainConfig, Sample,
};
use fcg_osr::stats::graph_stats;
use fcg_osr::transforms::TransformKind;

#[derive(Parser)]
#[command(
    name = "fcgosr",
    about = "Open-set malware family recognition over function call graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a disassembly listing into a function call graph
    Extract {
        /// Disassembly listing (FUNC/ENDF blocks, one opcode per line)
        #[arg(long = "in")]
        input: PathBuf,
        /// Output graph JSON
        #[arg(long)]
        out: PathBuf,
        /// Opcode n-gram width for function similarity
        #[arg(long, default_value_t = 2)]
        ngram: usize,
        /// MinHash signature length
        #[arg(long, default_value_t = 64)]
        hashes: usize,
        /// LSH bands (must divide the signature length)
        #[arg(long, default_value_t = 16)]
        bands: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Class label to attach to the graph
        #[arg(long)]
        label: Option<String>,
    },
    /// Summarize a graph corpus (vertex, degree, and component statistics)
    Stats {
        /// Corpus JSONL, one graph per line
        #[arg(long = "in")]
        input: PathBuf,
        /// Output report JSON (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic corpus of component-structured graphs
    Synth {
        /// Output corpus JSONL
        #[arg(long)]
        out: PathBuf,
        /// Generator config JSON; the built-in reference config when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the reference config (ignored with --config)
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Draw known/unknown class splits from a labeled corpus
    Split {
        /// Corpus JSONL whose labels define the class pool
        #[arg(long)]
        corpus: PathBuf,
        /// Known classes per split
        #[arg(long)]
        known_count: usize,
        /// Distinct known-class groups
        #[arg(long, default_value_t = 3)]
        groups: usize,
        /// Runs per group
        #[arg(long, default_value_t = 10)]
        runs_per_group: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output splits JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Pre-train an autoencoder to reconstruct originals from transformed views
    Pretrain {
        /// Training corpus JSONL
        #[arg(long)]
        corpus: PathBuf,
        /// Full pre-training config JSON; flags below override its fields
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model JSON
        #[arg(long)]
        out: PathBuf,
        /// Adjacency padding size (defines the architecture when no config)
        #[arg(long, default_value_t = 67)]
        size: usize,
        /// Representation dimension (when no config)
        #[arg(long, default_value_t = 6)]
        dim: usize,
        /// Comma-separated transform kinds (fcg_shift, fcg_random,
        /// node_dropping, subgraph_sampling, identity)
        #[arg(long)]
        transforms: Option<String>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fine-tune a classifier or embedding on known-class labels
    Finetune {
        /// Training corpus JSONL
        #[arg(long)]
        corpus: PathBuf,
        /// Pre-trained model JSON; a fresh network when omitted
        #[arg(long)]
        model: Option<PathBuf>,
        /// Loss: ce or triplet
        #[arg(long)]
        loss: String,
        /// Output model JSON
        #[arg(long)]
        out: PathBuf,
        /// Adjacency padding size (for the fresh-network architecture)
        #[arg(long, default_value_t = 67)]
        size: usize,
        /// Representation dimension (for the fresh-network architecture)
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute eval-mode representations for a corpus
    Embed {
        #[arg(long)]
        model: PathBuf,
        /// Corpus JSONL
        #[arg(long)]
        corpus: PathBuf,
        /// Output representations JSONL
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 67)]
        size: usize,
    },
    /// Fit per-class prototype statistics and a decision threshold
    FitOsr {
        /// Fine-tuned model JSON
        #[arg(long)]
        model: PathBuf,
        /// Training corpus JSONL (known classes only)
        #[arg(long)]
        corpus: PathBuf,
        /// Output detector JSON
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 67)]
        size: usize,
        /// statistical (deviation > 3) or manual (train-score percentile)
        #[arg(long, default_value = "statistical")]
        threshold: String,
        /// Percentile for the manual threshold
        #[arg(long, default_value_t = 99.0)]
        percentile: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Score samples against a fitted detector
    Score {
        /// Detector JSON from fit-osr
        #[arg(long)]
        osr: PathBuf,
        /// Representations JSONL, or a corpus JSONL when --model is given
        #[arg(long = "in")]
        input: PathBuf,
        /// Model used to embed a raw corpus before scoring
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output CSV (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 67)]
        size: usize,
    },
    /// Run the full split x method experiment grid
    Run {
        /// Experiment config JSON
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the pinned reference protocol instead of a config file
        #[arg(long)]
        reference: bool,
        /// Output directory (overrides the config's)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Override the experiment seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute detection and classification metrics from a scores CSV
    Metrics {
        /// CSV with id,truth,score,predicted columns
        #[arg(long = "in")]
        input: PathBuf,
        /// Output metrics JSON (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Extract {
            input,
            out,
            ngram,
            hashes,
            bands,
            seed,
            label,
        } => cmd_extract(&input, &out, ngram, hashes, bands, seed, label),
        Command::Stats { input, out } => cmd_stats(&input, out.as_deref()),
        Command::Synth { out, config, seed } => cmd_synth(&out, config.as_deref(), seed),
        Command::Split {
            corpus,
            known_count,
            groups,
            runs_per_group,
            seed,
            out,
        } => cmd_split(&corpus, known_count, groups, runs_per_group, seed, &out),
        Command::Pretrain {
            corpus,
            config,
            out,
            size,
            dim,
            transforms,
            views,
            epochs,
            batch,
            learning_rate,
            seed,
        } => cmd_pretrain(
            &corpus,
            config.as_deref(),
            &out,
            size,
            dim,
            transforms,
            views,
            epochs,
            batch,
            learning_rate,
            seed,
        ),
        Command::Finetune {
            corpus,
            model,
            loss,
            out,
            size,
            dim,
            epochs,
            batch,
            margin,
            learning_rate,
            seed,
        } => cmd_finetune(
            &corpus,
            model.as_deref(),
            &loss,
            &out,
            size,
            dim,
            epochs,
            batch,
            margin,
            learning_rate,
            seed,
        ),
        Command::Embed {
            model,
            corpus,
            out,
            size,
        } => cmd_embed(&model, &corpus, &out, size),
        Command::FitOsr {
            model,
            corpus,
            out,
            size,
            threshold,
            percentile,
            epsilon,
        } => cmd_fit_osr(&model, &corpus, &out, size, &threshold, percentile, epsilon),
        Command::Score {
            osr,
            input,
            model,
            out,
            size,
        } => cmd_score(&osr, &input, model.as_deref(), out.as_deref(), size),
        Command::Run {
            config,
            reference,
            out_dir,
            jobs,
            seed,
        } => cmd_run(config.as_deref(), reference, out_dir, jobs, seed),
        Command::Metrics { input, out } => cmd_metrics(&input, out.as_deref()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Print to stdout, treating a closed pipe as a normal end of output.
fn print_out(text: &str) -> Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|()| stdout.flush())
    {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        other => Ok(other?),
    }
}

fn emit<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => print_out(&format!("{}\n", serde_json::to_string_pretty(value)?)),
    }
}

fn parse_loss(text: &str) -> Result<LossKind> {
    match text {
        "ce" => Ok(LossKind::CrossEntropy),
        "triplet" => Ok(LossKind::Triplet),
        other => bail!("unknown loss `{other}` (expected ce or triplet)"),
    }
}

fn parse_transforms(text: &str) -> Result<Vec<TransformKind>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            serde_json::from_value(serde_json::Value::String(s.to_string()))
                .with_context(|| format!("unknown transform `{s}`"))
        })
        .collect()
}

fn load_samples(path: &Path, size: usize) -> Result<Vec<Sample>> {
    let corpus = load_corpus(path)?;
    Ok(samples_from_graphs(&corpus, size, PadMode::Truncate)?)
}

#[allow(clippy::too_many_arguments)]
fn cmd_extract(
    input: &Path,
    out: &Path,
    ngram: usize,
    hashes: usize,
    bands: usize,
    seed: u64,
    label: Option<String>,
) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let cfg = ExtractConfig {
        ngram,
        num_hashes: hashes,
        bands,
        seed,
    };
    let build = extract_fcg(&text, &cfg)?;
    let fcg = match label {
        Some(l) => build.fcg.with_label(l),
        None => build.fcg,
    };
    write_json(out, &fcg)?;
    eprintln!(
        "extracted {} vertices, {} edges ({} unresolved callees)",
        fcg.num_vertices,
        fcg.edges.len(),
        build.unresolved_callees
    );
    Ok(())
}

fn cmd_stats(input: &Path, out: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(input)?;
    emit(out, &graph_stats(&corpus)?)
}

fn cmd_synth(out: &Path, config: Option<&Path>, seed: u64) -> Result<()> {
    let cfg: SynthConfig = match config {
        Some(path) => read_json(path)?,
        None => reference_synth_config(seed),
    };
    let corpus = synth_corpus(&cfg)?;
    save_corpus(out, &corpus)?;
    eprintln!("wrote {} graphs to {}", corpus.len(), out.display());
    Ok(())
}

fn cmd_split(
    corpus: &Path,
    known_count: usize,
    groups: usize,
    runs_per_group: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let graphs = load_corpus(corpus)?;
    let mut classes = Vec::new();
    for g in &graphs {
        let label = g
            .label
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("unlabeled graph in {}", corpus.display()))?;
        if let LabelTag::Known(id) = label.parse::<LabelTag>()? {
            classes.push(id);
        }
    }
    classes.sort_unstable();
    classes.dedup();
    let splits = make_splits(&classes, known_count, groups, runs_per_group, seed)?;
    write_json(out, &splits)?;
    eprintln!("wrote {} splits to {}", splits.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_pretrain(
    corpus: &Path,
    config: Option<&Path>,
    out: &Path,
    size: usize,
    dim: usize,
    transforms: Option<String>,
    views: Option<usize>,
    epochs: Option<usize>,
    batch: Option<usize>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg: PretrainConfig = match config {
        Some(path) => read_json(path)?,
        None => PretrainConfig::new(default_architecture(size, dim, false)),
    };
    if let Some(t) = transforms {
        cfg.transforms = parse_transforms(&t)?;
    }
    if let Some(v) = views {
        cfg.views_per_sample = v;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch {
        cfg.batch_size = b;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let samples = load_samples(corpus, size)?;
    let model = pretrain_dtae(&samples, &cfg)?;
    save_model(out, &model)?;
    eprintln!(
        "pre-trained {} epochs, final loss {:.6}",
        cfg.epochs,
        model.pretrain_loss_history.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_finetune(
    corpus: &Path,
    model: Option<&Path>,
    loss: &str,
    out: &Path,
    size: usize,
    dim: usize,
    epochs: Option<usize>,
    batch: Option<usize>,
    margin: Option<f64>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = FinetuneConfig::new(parse_loss(loss)?);
    let base = model.map(load_model).transpose()?;
    if base.is_none() {
        cfg.architecture = Some(default_architecture(size, dim, false));
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch {
        cfg.batch_size = b;
    }
    if let Some(m) = margin {
        cfg.margin = m;
    }
    if let Some(lr) = learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let samples = load_samples(corpus, size)?;
    let trained = finetune(base.as_ref(), &samples, &cfg)?;
    save_model(out, &trained)?;
    eprintln!(
        "fine-tuned {} epochs, final loss {:.6}",
        cfg.epochs,
        trained.finetune_loss_history.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_embed(model: &Path, corpus: &Path, out: &Path, size: usize) -> Result<()> {
    let model = load_model(model)?;
    let samples = load_samples(corpus, size)?;
    let reps = embed(&model, &samples)?;
    save_representations(out, &reps)?;
    eprintln!("wrote {} representations to {}", reps.len(), out.display());
    Ok(())
}

fn cmd_fit_osr(
    model: &Path,
    corpus: &Path,
    out: &Path,
    size: usize,
    threshold: &str,
    percentile: f64,
    epsilon: f64,
) -> Result<()> {
    let model = load_model(model)?;
    let samples = load_samples(corpus, size)?;
    let reps = embed(&model, &samples)?;
    let fitted = fit_class_stats(&reps, epsilon)?;
    let fitted = match threshold {
        "statistical" => fitted,
        "manual" => {
            let scores: Vec<f64> = reps
                .items
                .iter()
                .map(|r| fitted.outlier_score(&r.z))
                .collect::<fcg_osr::Result<_>>()?;
            let value = manual_threshold(&scores, percentile)?;
            fitted.with_threshold(ThresholdMode::Manual, value)?
        }
        other => bail!("unknown threshold mode `{other}` (expected statistical or manual)"),
    };
    save_osr(out, &fitted)?;
    eprintln!(
        "fitted {} classes, threshold {:.6}",
        fitted.classes.len(),
        fitted.threshold.value
    );
    Ok(())
}

fn score_csv(osr: &OsrModel, reps: &fcg_osr::corpus::RepresentationSet) -> Result<String> {
    let mut csv = String::from("id,truth,score,predicted\n");
    for rep in &reps.items {
        let score = osr.outlier_score(&rep.z)?;
        let predicted = osr.classify(&rep.z)?;
        csv.push_str(&format!(
            "{},{},{},{}\n",
            rep.id, rep.label, score, predicted
        ));
    }
    Ok(csv)
}

fn cmd_score(
    osr: &Path,
    input: &Path,
    model: Option<&Path>,
    out: Option<&Path>,
    size: usize,
) -> Result<()> {
    let detector = load_osr(osr)?;
    let reps = match model {
        Some(path) => {
            let model = load_model(path)?;
            let samples = load_samples(input, size)?;
            embed(&model, &samples)?
        }
        None => load_representations(input)?,
    };
    let csv = score_csv(&detector, &reps)?;
    match out {
        Some(path) => fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
        None => print_out(&csv),
    }
}

fn cmd_run(
    config: Option<&Path>,
    reference: bool,
    out_dir: Option<PathBuf>,
    jobs: usize,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = match (config, reference) {
        (Some(path), false) => read_json::<ExperimentConfig>(path)?,
        (None, true) => {
            let dir = out_dir
                .clone()
                .ok_or_else(|| anyhow::anyhow!("--reference requires --out-dir"))?;
            ExperimentConfig::reference(dir)
        }
        _ => bail!("pass exactly one of --config or --reference"),
    };
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_experiment(&cfg, jobs)?;
    let failures: usize = report.runs.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "completed {} method-runs ({} failed), report in {}",
        report.runs.len(),
        failures,
        cfg.output_dir.display()
    );
    Ok(())
}

fn cmd_metrics(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "id,truth,score,predicted" {
        bail!("expected header id,truth,score,predicted, got `{header}`");
    }
    let mut truths = Vec::new();
    let mut scores = Vec::new();
    let mut predictions = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            bail!("line {}: expected 4 fields, got {}", i + 2, fields.len());
        }
        truths.push(fields[1].parse::<LabelTag>()?);
        scores.push(
            fields[2]
                .parse::<f64>()
                .with_context(|| format!("line {}: bad score `{}`", i + 2, fields[2]))?,
        );
        predictions.push(fields[3].parse::<LabelTag>()?);
    }
    let mut known: Vec<usize> = truths.iter().filter_map(LabelTag::known_id).collect();
    known.sort_unstable();
    known.dedup();
    let is_unknown: Vec<bool> = truths.iter().map(LabelTag::is_unknown).collect();
    // AUC is only defined when the truth has both knowns and unknowns.
    let mixed = is_unknown.iter().any(|&u| u) && is_unknown.iter().any(|&u| !u);
    let auc = |cap: f64| -> Result<Option<f64>> {
        Ok(if mixed {
            Some(auc_at_fpr(&scores, &is_unknown, cap)?)
        } else {
            None
        })
    };
    let f1 = f1_report(&truths, &predictions, &known)?;
    let report = serde_json::json!({
        "auc_full": auc(1.0)?,
        "auc_at_10": auc(0.1)?,
        "f1_known": f1.f1_known,
        "f1_unknown": f1.f1_unknown,
        "f1_overall": f1.f1_overall,
        "per_class": f1.per_class,
        "confusion": f1.confusion,
    });
    emit(out, &report)
}
