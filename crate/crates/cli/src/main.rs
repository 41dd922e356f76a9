use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use schemakernel::config::{Ablation, RunConfig};
use schemakernel::kernel::Checkpoint;
use schemakernel::llm::Mode;
use schemakernel::pipeline::{
    self, evaluate_checkpoints, generate_fol, induce_library, predict_one, read_records, train_trials, uses_library,
    write_file, write_records,
};
use schemakernel::schema::SchemaLibrary;
use schemakernel::synthetic;
use schemakernel::train::{load_dataset, write_predictions, LabelSet, MetricMode, TrainLog};

#[derive(Debug, Parser)]
#[command(name = "schemakernel", version, about = "Schema-guided graph-kernel stance detection")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// live, record or replay.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// random-filters or skip-augmentation; repeatable.
    #[arg(long, global = true)]
    ablate: Vec<Ablation>,
    /// favor-against-none or pro-con-neutral.
    #[arg(long, global = true)]
    label_set: Option<LabelSet>,
    /// Accept artifacts produced under a different configuration.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ask for a logic rationale per dataset row and write a graphs file.
    GenerateFol {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster predicates of a graphs file into a schema library.
    Induce {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model; writes one checkpoint per trial and a log.
    Train {
        #[arg(long)]
        train: PathBuf,
        /// Validation graphs for early stopping.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        /// Checkpoint of the first trial; later trials get `.trialN` names.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score checkpoints on a graphs file.
    Eval {
        #[arg(long)]
        graphs: PathBuf,
        /// Repeat to average several trials.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        /// favor-against-only or all-classes.
        #[arg(long)]
        metric_mode: Option<MetricMode>,
        /// Receives metrics.json and predictions.jsonl.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Classify one sentence and show which filters fired.
    Predict {
        #[arg(long)]
        text: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Print a schema library.
    Inspect {
        library: PathBuf,
        #[arg(long)]
        json: bool,
        /// Also preview this many filters.
        #[arg(long)]
        filters: Option<usize>,
    },
    /// Write the synthetic corpus, its config and a replay cache.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = g.mode {
        cfg.mode = mode;
    }
    if let Some(dir) = &g.cache_dir {
        cfg.cache_dir = dir.clone();
    }
    if let Some(labels) = g.label_set {
        cfg.labels = labels;
    }
    for &a in &g.ablate {
        cfg.ablation.set(a);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_library(path: Option<&Path>, cfg: &RunConfig) -> Result<Option<SchemaLibrary>> {
    match path {
        Some(p) => Ok(Some(
            SchemaLibrary::load(p).with_context(|| format!("loading library {}", p.display()))?,
        )),
        None if uses_library(cfg) => bail!("--library is required unless both ablations are set"),
        None => Ok(None),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TrialEntry<'a> {
    trial: usize,
    seed: u64,
    checkpoint: String,
    log: &'a TrainLog,
}

#[derive(Serialize)]
struct TrainLogFile<'a> {
    config_fingerprint: String,
    library_fingerprint: Option<String>,
    trials: Vec<TrialEntry<'a>>,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    let force = cli.global.force;
    match cli.command {
        Command::GenerateFol { dataset, out } => {
            let examples = load_dataset(&dataset, cfg.labels)?;
            let gateway = cfg.gateway()?;
            let (records, stats) = generate_fol(&examples, cfg.labels, &gateway, &cfg.fingerprint())?;
            write_records(&out, &records)?;
            println!("wrote {} graph records to {}", records.len(), out.display());
            if stats.fallbacks + stats.parse_failures + stats.failed_requests > 0 {
                eprintln!(
                    "partial failures: {} failed requests, {} fallback graphs, {} unparsable lines",
                    stats.failed_requests, stats.fallbacks, stats.parse_failures
                );
            }
        }
        Command::Induce { graphs, out } => {
            let records = read_records(&graphs)?;
            let gateway = cfg.gateway()?;
            let embedder = cfg.embedder()?;
            let library = induce_library(&records, &cfg, &gateway, embedder.as_ref())?;
            library.save(&out)?;
            let fallbacks = library.nodes.iter().filter(|n| n.summary_fallback).count();
            println!("K = {} ({} edges), wrote {}", library.k, library.edges.len(), out.display());
            if fallbacks > 0 {
                eprintln!("partial failures: {fallbacks} clusters kept a member as their summary");
            }
        }
        Command::Train { train, dev, library, out } => {
            let train_records = read_records(&train)?;
            let dev_records = match &dev {
                Some(p) => read_records(p)?,
                None => Vec::new(),
            };
            let library = load_library(library.as_deref(), &cfg)?;
            let embedder = cfg.embedder()?;
            let trials = train_trials(&train_records, &dev_records, &cfg, library.as_ref(), embedder.as_ref())?;
            let mut entries = Vec::new();
            for (t, trial) in trials.iter().enumerate() {
                let path = if t == 0 { out.clone() } else { sibling(&out, &format!(".trial{t}.json")) };
                write_file(&path, &format!("{}\n", trial.checkpoint.to_json()))?;
                entries.push(TrialEntry {
                    trial: t,
                    seed: trial.checkpoint.seed,
                    checkpoint: path
                        .file_name()
                        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
                    log: &trial.log,
                });
                let last = trial.log.epochs.last();
                println!(
                    "trial {t}: {} steps, train accuracy {:.4}, best dev loss {}",
                    trial.log.total_steps,
                    last.map_or(0.0, |e| e.train_accuracy),
                    trial.log.best_dev_loss.map_or("n/a".to_string(), |l| format!("{l:.4}")),
                );
            }
            let log = TrainLogFile {
                config_fingerprint: cfg.fingerprint(),
                library_fingerprint: library.as_ref().map(SchemaLibrary::fingerprint),
                trials: entries,
            };
            write_file(sibling(&out, ".log.json"), &pretty(&log))?;
        }
        Command::Eval {
            graphs,
            checkpoints,
            library,
            metric_mode,
            out_dir,
        } => {
            let records = read_records(&graphs)?;
            let library = load_library(library.as_deref(), &cfg)?;
            let cks = checkpoints
                .iter()
                .map(|p| Checkpoint::load(p).with_context(|| format!("loading checkpoint {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            for ck in &cks {
                pipeline::check_checkpoint(ck, &cfg, library.as_ref(), force)?;
            }
            // The metric mode only affects reporting, so it is applied after
            // the fingerprint check.
            let mut cfg = cfg;
            if let Some(m) = metric_mode {
                cfg.train.metric_mode = m;
            }
            let embedder = cfg.embedder()?;
            let (report, metrics) = evaluate_checkpoints(&records, &cks, &cfg, library.as_ref(), embedder.as_ref())?;
            write_file(out_dir.join("metrics.json"), &pretty(&metrics))?;
            write_predictions(out_dir.join("predictions.jsonl"), &report.predictions)?;
            println!(
                "F_avg {:.4} ({:?}), accuracy {:.4}, mean over {} trial(s) {:.4} ± {:.4}",
                metrics.f_avg,
                metrics.mode,
                metrics.accuracy,
                metrics.trials.len(),
                metrics.mean,
                metrics.std
            );
            if !metrics.absent_classes.is_empty() {
                eprintln!("classes absent from golds and predictions: {}", metrics.absent_classes.join(", "));
            }
        }
        Command::Predict {
            text,
            target,
            checkpoint,
            library,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let library = load_library(library.as_deref(), &cfg)?;
            let fp = library.as_ref().map(SchemaLibrary::fingerprint);
            ck.check_library(fp.as_deref(), force)?;
            let gateway = cfg.gateway()?;
            let embedder = cfg.embedder()?;
            let p = predict_one(&text, &target, &ck, &cfg, library.as_ref(), &gateway, embedder.as_ref())?;
            print!("{}", pretty(&p));
        }
        Command::Inspect { library, json, filters } => {
            let lib = SchemaLibrary::load(&library)?;
            let previews = match filters {
                Some(n) => lib.filters(n, cfg.kernel.hop, cfg.schema.size_cap)?,
                None => Vec::new(),
            };
            if json {
                #[derive(Serialize)]
                struct Dump<'a> {
                    library: &'a SchemaLibrary,
                    fingerprint: String,
                    filters: Vec<(usize, Vec<usize>)>,
                }
                let dump = Dump {
                    library: &lib,
                    fingerprint: lib.fingerprint(),
                    filters: previews.iter().map(|f| (f.center, f.node_ids.clone())).collect(),
                };
                print!("{}", pretty(&dump));
            } else {
                for n in &lib.nodes {
                    println!("schema {} [{} members] {}", n.id, n.member_count, n.summary);
                }
                for e in &lib.edges {
                    println!("edge {} -> {} {:?} {:.4}", e.src, e.dst, e.relation, e.weight);
                }
                for f in &previews {
                    println!("filter center {} nodes {:?}", f.center, f.node_ids);
                }
            }
        }
        Command::Synth { out } => {
            let mut fixture_cfg = synthetic::fixture_config();
            fixture_cfg.seed = cli.global.seed.unwrap_or(fixture_cfg.seed);
            let fx = synthetic::write_fixture(&out, &fixture_cfg)?;
            println!(
                "wrote {} train and {} dev examples and {} cached responses to {}",
                fx.train.len(),
                fx.dev.len(),
                fx.cache_entries,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
