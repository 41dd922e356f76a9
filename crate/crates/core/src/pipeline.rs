//! End-to-end stages: rationale generation, induction, training, evaluation
//! and single-example prediction.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::embed::{EmbedError, EmbeddingProvider};
use crate::fol::{build_fol_graph, parse_llm_stance, parse_rationale, FolGraph, LlmStance};
use crate::kernel::{augment_graph, forward, Checkpoint, KernelError, ModelParams, PreparedGraph, CHECKPOINT_VERSION};
use crate::llm::{Gateway, LlmError};
use crate::schema::{induce, SchemaError, SchemaLibrary};
use crate::train::{
    evaluate, train, EvalReport, LabelSet, LabeledExample, MetricsFile, PreparedExample, TrainError, TrainLog,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path} line {line}: {message}")]
    Format { path: String, line: usize, message: String },
    #[error("{what} was produced under config {got}, current config is {expected} (use --force to override)")]
    FingerprintMismatch { what: String, expected: String, got: String },
    #[error("record {index} has no label")]
    Unlabeled { index: usize },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One line of a graphs file: an example, its rationale and the graph
/// parsed from it. Graphs are stored without embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub text: String,
    pub target: String,
    #[serde(default)]
    pub label: Option<String>,
    pub rationale: String,
    pub graph: FolGraph,
    /// Lines that looked like logic but did not parse.
    pub parse_failures: usize,
    /// Prose lines discarded by extraction.
    pub dropped_lines: usize,
    /// The graph is the single-node fallback.
    pub fallback: bool,
    #[serde(default)]
    pub llm_stance: Option<LlmStance>,
    /// Set when the rationale could not be obtained.
    #[serde(default)]
    pub error: Option<String>,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FolStats {
    pub rows: usize,
    pub fallbacks: usize,
    pub parse_failures: usize,
    pub dropped_lines: usize,
    pub failed_requests: usize,
}

/// Turns one rationale into a graph, falling back to `Text(<target>)` when
/// nothing parses.
pub fn graph_from_rationale(rationale: &str, text: &str, target: &str) -> (FolGraph, usize, usize, bool) {
    let (exprs, block, failed) = parse_rationale(rationale);
    match build_fol_graph(&exprs) {
        Ok(g) => (g, failed, block.dropped, false),
        Err(_) => (FolGraph::fallback(target, text), failed, block.dropped, true),
    }
}

/// Asks the rationale prompt for every example.
///
/// Requests run concurrently; output order follows input order. A replay
/// cache miss aborts the run. Other request failures flag the row, give it
/// the fallback graph and let the run continue.
pub fn generate_fol(
    examples: &[LabeledExample],
    labels: LabelSet,
    gateway: &Gateway,
    config_fingerprint: &str,
) -> Result<(Vec<GraphRecord>, FolStats), PipelineError> {
    let records = examples
        .par_iter()
        .map(|ex| {
            let (rationale, error) = match gateway.p1(&ex.text, &ex.target) {
                Ok(r) => (r, None),
                Err(e @ LlmError::CacheMiss { .. }) => return Err(e),
                Err(e) => (String::new(), Some(e.to_string())),
            };
            let (graph, parse_failures, dropped_lines, fallback) = graph_from_rationale(&rationale, &ex.text, &ex.target);
            Ok(GraphRecord {
                text: ex.text.clone(),
                target: ex.target.clone(),
                label: Some(labels.name(ex.label).to_string()),
                llm_stance: parse_llm_stance(&rationale),
                rationale,
                graph,
                parse_failures,
                dropped_lines,
                fallback,
                error,
                config_fingerprint: config_fingerprint.to_string(),
            })
        })
        .collect::<Result<Vec<_>, LlmError>>()?;
    let stats = FolStats {
        rows: records.len(),
        fallbacks: records.iter().filter(|r| r.fallback).count(),
        parse_failures: records.iter().map(|r| r.parse_failures).sum(),
        dropped_lines: records.iter().map(|r| r.dropped_lines).sum(),
        failed_requests: records.iter().filter(|r| r.error.is_some()).count(),
    };
    Ok((records, stats))
}

pub fn write_records(path: impl AsRef<Path>, records: &[GraphRecord]) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<GraphRecord>, PipelineError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Format {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

const EMBED_BATCH: usize = 256;

/// Fills in every missing node embedding. Each distinct text is embedded
/// once.
pub fn embed_graphs(graphs: &mut [FolGraph], embedder: &dyn EmbeddingProvider) -> Result<(), PipelineError> {
    let mut texts: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for g in graphs.iter() {
        for n in g.nodes.iter().filter(|n| n.embedding.is_none()) {
            let t = n.text_for_embedding();
            if !index.contains_key(&t) {
                index.insert(t.clone(), texts.len());
                texts.push(t);
            }
        }
    }
    let mut vectors = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_BATCH) {
        vectors.extend(embedder.embed_batch(chunk)?);
    }
    for v in &vectors {
        if v.len() != embedder.dimension() {
            return Err(EmbedError::DimensionMismatch {
                expected: embedder.dimension(),
                got: v.len(),
            }
            .into());
        }
    }
    for g in graphs.iter_mut() {
        for n in g.nodes.iter_mut().filter(|n| n.embedding.is_none()) {
            n.embedding = Some(vectors[index[&n.text_for_embedding()]].clone());
        }
    }
    Ok(())
}

/// Embeds the records' graphs and induces a schema library from them.
pub fn induce_library(
    records: &[GraphRecord],
    cfg: &RunConfig,
    gateway: &Gateway,
    embedder: &dyn EmbeddingProvider,
) -> Result<SchemaLibrary, PipelineError> {
    let mut graphs: Vec<FolGraph> = records.iter().map(|r| r.graph.clone()).collect();
    if graphs.is_empty() {
        return Err(SchemaError::EmptyCorpus.into());
    }
    embed_graphs(&mut graphs, embedder)?;
    Ok(induce(&graphs, &cfg.induce_config(), gateway, embedder, &cfg.fingerprint())?)
}

/// Embeds, augments (unless ablated or no library is given) and prepares
/// records for the model.
pub fn prepare_records(
    records: &[GraphRecord],
    labels: LabelSet,
    kernel: &crate::kernel::KernelConfig,
    library: Option<&SchemaLibrary>,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<PreparedExample>, PipelineError> {
    let mut graphs: Vec<FolGraph> = records.iter().map(|r| r.graph.clone()).collect();
    embed_graphs(&mut graphs, embedder)?;
    records
        .par_iter()
        .zip(graphs)
        .enumerate()
        .map(|(index, (r, g))| {
            let label = match &r.label {
                Some(l) => labels.parse_label(l).ok_or_else(|| TrainError::BadLabel {
                    row: index + 1,
                    value: l.clone(),
                })?,
                None => return Err(PipelineError::Unlabeled { index }),
            };
            let g = match library {
                Some(lib) => augment_graph(&g, lib)?,
                None => g,
            };
            Ok(PreparedExample {
                text: r.text.clone(),
                target: r.target.clone(),
                label,
                prepared: PreparedGraph::new(&g, kernel)?,
            })
        })
        .collect()
}

/// Seed of trial `t`; trials differ in initialization and batch order.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// Layer-0 filters from the library, or random ones under the ablation.
pub fn init_params(cfg: &RunConfig, library: Option<&SchemaLibrary>, seed: u64) -> Result<ModelParams, PipelineError> {
    let d = cfg.embedding.dimension;
    if cfg.ablation.random_filters {
        return Ok(ModelParams::random(&cfg.kernel, d, seed)?);
    }
    let lib = library.ok_or_else(|| PipelineError::Invalid("schema filters need a library".into()))?;
    if lib.d != d {
        return Err(SchemaError::DimensionMismatch { expected: d, got: lib.d }.into());
    }
    let filters = lib.filters(cfg.kernel.n_filters, cfg.kernel.hop, cfg.schema.size_cap)?;
    Ok(ModelParams::from_schema(&cfg.kernel, d, &filters, seed)?)
}

/// Whether a run reads the library at all.
pub fn uses_library(cfg: &RunConfig) -> bool {
    !(cfg.ablation.random_filters && cfg.ablation.skip_augmentation)
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// Prepares both sets and runs `cfg.train.trials` independent trials.
pub fn train_trials(
    train_records: &[GraphRecord],
    dev_records: &[GraphRecord],
    cfg: &RunConfig,
    library: Option<&SchemaLibrary>,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<TrialResult>, PipelineError> {
    let library = if uses_library(cfg) { library } else { None };
    if uses_library(cfg) && library.is_none() {
        return Err(PipelineError::Invalid("this configuration needs a schema library".into()));
    }
    let augment_with = if cfg.ablation.skip_augmentation { None } else { library };
    let train_set = prepare_records(train_records, cfg.labels, &cfg.kernel, augment_with, embedder)?;
    let dev_set = prepare_records(dev_records, cfg.labels, &cfg.kernel, augment_with, embedder)?;
    train_prepared(&train_set, &dev_set, cfg, library)
}

/// Trials over already prepared sets.
pub fn train_prepared(
    train_set: &[PreparedExample],
    dev_set: &[PreparedExample],
    cfg: &RunConfig,
    library: Option<&SchemaLibrary>,
) -> Result<Vec<TrialResult>, PipelineError> {
    let library_fingerprint = library.map(SchemaLibrary::fingerprint);
    (0..cfg.train.trials)
        .map(|t| {
            let seed = trial_seed(cfg.seed, t);
            let init = init_params(cfg, library, seed)?;
            let outcome = train(train_set, dev_set, &cfg.kernel, init, &cfg.train, cfg.labels, seed)?;
            let mut params = outcome.best;
            params.generation = 0;
            Ok(TrialResult {
                checkpoint: Checkpoint {
                    version: CHECKPOINT_VERSION,
                    kernel: cfg.kernel.clone(),
                    d: cfg.embedding.dimension,
                    labels: cfg.labels.names().iter().map(|s| s.to_string()).collect(),
                    library_fingerprint: library_fingerprint.clone(),
                    config_fingerprint: cfg.fingerprint(),
                    seed,
                    params,
                },
                log: outcome.log,
            })
        })
        .collect()
}

/// Refuses checkpoints from another configuration or library unless
/// `force` is set.
pub fn check_checkpoint(
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    library: Option<&SchemaLibrary>,
    force: bool,
) -> Result<(), PipelineError> {
    if !force && checkpoint.config_fingerprint != cfg.fingerprint() {
        return Err(PipelineError::FingerprintMismatch {
            what: "checkpoint".into(),
            expected: cfg.fingerprint(),
            got: checkpoint.config_fingerprint.clone(),
        });
    }
    if checkpoint.d != cfg.embedding.dimension {
        return Err(SchemaError::DimensionMismatch {
            expected: cfg.embedding.dimension,
            got: checkpoint.d,
        }
        .into());
    }
    let fp = library.map(SchemaLibrary::fingerprint);
    checkpoint.check_library(fp.as_deref(), force)?;
    Ok(())
}

/// Evaluates every checkpoint on the same records. The report is the first
/// checkpoint's; the metrics file lists each checkpoint's score.
pub fn evaluate_checkpoints(
    records: &[GraphRecord],
    checkpoints: &[Checkpoint],
    cfg: &RunConfig,
    library: Option<&SchemaLibrary>,
    embedder: &dyn EmbeddingProvider,
) -> Result<(EvalReport, MetricsFile), PipelineError> {
    let first = checkpoints
        .first()
        .ok_or_else(|| PipelineError::Invalid("no checkpoint to evaluate".into()))?;
    let augment_with = if cfg.ablation.skip_augmentation { None } else { library };
    let mode = cfg.train.metric_mode;
    let mut reports = Vec::with_capacity(checkpoints.len());
    for ck in checkpoints {
        let set = prepare_records(records, cfg.labels, &ck.kernel, augment_with, embedder)?;
        reports.push(evaluate(&set, &ck.kernel, &ck.params, cfg.labels, mode)?);
    }
    let trials: Vec<f64> = reports.iter().map(|r| r.report(mode).f_avg).collect();
    let report = reports.swap_remove(0);
    let metrics = MetricsFile::new(&report, mode, trials, &first.config_fingerprint);
    Ok((report, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterNote {
    pub layer: usize,
    pub filter: usize,
    /// Summary of the schema node the filter was cut around.
    pub schema: Option<String>,
    pub votes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePrediction {
    pub text: String,
    pub target: String,
    pub pred: String,
    pub probabilities: Vec<(String, f64)>,
    pub rationale: String,
    pub fallback: bool,
    pub selected_filters: Vec<Vec<Vec<usize>>>,
    /// Layer-0 filters ordered by how many nodes selected them.
    pub filter_votes: Vec<FilterNote>,
}

/// Runs one sentence/target pair through the whole pipeline.
pub fn predict_one(
    text: &str,
    target: &str,
    checkpoint: &Checkpoint,
    cfg: &RunConfig,
    library: Option<&SchemaLibrary>,
    gateway: &Gateway,
    embedder: &dyn EmbeddingProvider,
) -> Result<SinglePrediction, PipelineError> {
    let rationale = gateway.p1(text, target)?;
    let (graph, _, _, fallback) = graph_from_rationale(&rationale, text, target);
    let mut graphs = vec![graph];
    embed_graphs(&mut graphs, embedder)?;
    let mut graph = graphs.pop().expect("one graph");
    if !cfg.ablation.skip_augmentation {
        if let Some(lib) = library {
            graph = augment_graph(&graph, lib)?;
        }
    }
    let prepared = PreparedGraph::new(&graph, &checkpoint.kernel)?;
    let trace = forward(&prepared, &checkpoint.kernel, &checkpoint.params)?;
    let selected = trace.selected_filters();

    let centers: Option<Vec<usize>> = match library {
        Some(lib) if !cfg.ablation.random_filters => Some(
            lib.filters(checkpoint.kernel.n_filters, checkpoint.kernel.hop, cfg.schema.size_cap)?
                .iter()
                .map(|f| f.center)
                .collect(),
        ),
        _ => None,
    };
    let mut votes: HashMap<usize, usize> = HashMap::new();
    if let Some(layer0) = selected.first() {
        for node in layer0 {
            for &f in node {
                *votes.entry(f).or_default() += 1;
            }
        }
    }
    let mut filter_votes: Vec<FilterNote> = votes
        .into_iter()
        .map(|(filter, votes)| FilterNote {
            layer: 0,
            filter,
            schema: match (&centers, library) {
                (Some(c), Some(lib)) => c.get(filter).map(|&id| lib.nodes[id].summary.clone()),
                _ => None,
            },
            votes,
        })
        .collect();
    filter_votes.sort_by(|a, b| b.votes.cmp(&a.votes).then(a.filter.cmp(&b.filter)));

    let pred = checkpoint.labels[trace.predicted()].clone();
    Ok(SinglePrediction {
        text: text.to_string(),
        target: target.to_string(),
        pred,
        probabilities: checkpoint.labels.iter().cloned().zip(trace.probs.iter().copied()).collect(),
        rationale,
        fallback,
        selected_filters: selected,
        filter_votes,
    })
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, text: &str) -> Result<(), PipelineError> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}
