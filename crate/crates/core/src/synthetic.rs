//! A synthetic stance corpus and a rule-based stand-in for the LLM.
//!
//! Each sentence names a target and three stance verbs, two of them tied
//! to aspects. The label is the class that contributes most verbs. The
//! oracle answers rationale prompts by reading the verbs back out of the
//! sentence as predicates, and summary prompts by naming the verb family
//! that dominates the cluster, so induced schemas line up with the classes.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ProviderKind, RunConfig};
use crate::embed::{fnv1a64, word_tokens};
use crate::llm::{Gateway, JsonlCache, Mode, Transport, TransportError};
use crate::pipeline::{generate_fol, induce_library, write_file, PipelineError};
use crate::train::{write_dataset, LabeledExample, TrainConfig};

/// Verbs per class, in class-index order.
pub const CLASS_VERBS: [[&str; 8]; 3] = [
    ["support", "endorse", "protect", "benefit", "improve", "strengthen", "praise", "advance"],
    ["oppose", "reject", "harm", "threaten", "undermine", "weaken", "condemn", "endanger"],
    ["mention", "describe", "report", "note", "question", "observe", "list", "cite"],
];

/// Summary label for a cluster dominated by each class's verbs.
pub const FAMILY_NAMES: [&str; 3] = ["Endorsement", "Opposition", "Neutral report"];

/// The outcome the oracle attaches to each class's verbs.
pub const CONCEPTS: [&str; 3] = ["ClearBenefit", "SeriousRisk", "PlainFact"];

pub const ASPECTS: [&str; 8] = ["health", "economy", "safety", "freedom", "jobs", "climate", "costs", "community"];

pub const TRAIN_TARGETS: [&str; 4] = ["mask mandates", "nuclear power", "school vouchers", "carbon tax"];
pub const DEV_TARGETS: [&str; 3] = ["remote work", "wind farms", "rent control"];

/// Probability that the third verb comes from another class.
const MIXED_RATE: f64 = 0.25;
/// Probability of an extra "many people discuss it" clause.
const DISTRACTOR_RATE: f64 = 0.5;

fn capitalize(word: &str) -> String {
    let mut c = word.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn camel(phrase: &str) -> String {
    phrase.split_whitespace().map(capitalize).collect()
}

fn verb_class(verb: &str) -> Option<usize> {
    CLASS_VERBS.iter().position(|vs| vs.contains(&verb))
}

/// `n` examples with labels cycling through the three classes, over the
/// given targets. Shuffled with `seed`.
pub fn generate(n: usize, targets: &[&str], seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 3;
        let target = targets[rng.gen_range(0..targets.len())];
        let own: Vec<&str> = CLASS_VERBS[label].choose_multiple(&mut rng, 3).copied().collect();
        let mut verbs = own.clone();
        if rng.gen_bool(MIXED_RATE) {
            let other = (label + rng.gen_range(1..3)) % 3;
            verbs[2] = CLASS_VERBS[other][rng.gen_range(0..8)];
        }
        let aspects: Vec<&str> = ASPECTS.choose_multiple(&mut rng, 2).copied().collect();
        let mut text = format!(
            "We {} {}: it will {} {} and {} {}.",
            verbs[0], target, verbs[1], aspects[0], verbs[2], aspects[1]
        );
        if rng.gen_bool(DISTRACTOR_RATE) {
            text.push_str(" Many people discuss it.");
        }
        out.push(LabeledExample {
            text,
            target: target.to_string(),
            label,
        });
    }
    out.shuffle(&mut rng);
    out
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(&text[start..start + len])
}

/// The rationale the oracle gives for one sentence/target pair.
pub fn rationale(sentence: &str, target: &str) -> String {
    let tokens = word_tokens(sentence);
    let verbs: Vec<&str> = tokens
        .iter()
        .filter_map(|t| CLASS_VERBS.iter().flatten().find(|v| **v == t.as_str()).copied())
        .collect();
    let aspects: Vec<&str> = tokens
        .iter()
        .filter_map(|t| ASPECTS.iter().find(|a| **a == t.as_str()).copied())
        .collect();
    let t = camel(target);
    let mut lines = vec![format!("The sentence takes a position on {target}.")];
    if verbs.is_empty() {
        lines.push("No explicit reasoning can be identified.".to_string());
        lines.push("Therefore the attitude is Neutral.".to_string());
        return lines.join("\n");
    }
    let v: Vec<String> = verbs
        .iter()
        .map(|v| capitalize(v))
        .collect();
    let c: Vec<&str> = verbs
        .iter()
        .map(|v| verb_class(v).map_or("Unknown", |k| CONCEPTS[k]))
        .collect();
    lines.push(format!("{}({t}, {})", v[0], c[0]));
    if v.len() >= 3 && aspects.len() >= 2 {
        lines.push(format!(
            "{}({}, {}) ∧ {}({}, {}) → {}({t}, {})",
            v[1],
            capitalize(aspects[0]),
            c[1],
            v[2],
            capitalize(aspects[1]),
            c[2],
            v[0],
            c[0]
        ));
    } else {
        for (extra, ce) in v[1..].iter().zip(&c[1..]) {
            lines.push(format!("{extra}({t}, {ce}) → {}({t}, {})", v[0], c[0]));
        }
    }
    if tokens.iter().any(|w| w == "discuss") {
        lines.push(format!("Discuss(People, {t})"));
    }
    // A share of responses carry one broken line, as real ones do.
    if fnv1a64(sentence.as_bytes()) % 7 == 0 {
        lines.push(format!("{}({t}", v[0]));
    }
    let mut votes = [0usize; 3];
    for verb in &verbs {
        if let Some(c) = verb_class(verb) {
            votes[c] += 1;
        }
    }
    let winner = (0..3).max_by_key(|&c| (votes[c], 3 - c)).expect("three classes");
    lines.push(format!(
        "Therefore the attitude is {}.",
        ["Support", "Opposed", "Neutral"][winner]
    ));
    lines.join("\n")
}

/// The summary the oracle gives for a list of predicate strings.
pub fn summary(predicates: &[&str]) -> String {
    let mut votes = [0usize; 3];
    let mut verbs: Vec<String> = Vec::new();
    for p in predicates {
        let name = p.split('(').next().unwrap_or(p).trim().to_lowercase();
        if let Some(c) = verb_class(&name) {
            votes[c] += 1;
            if !verbs.contains(&name) {
                verbs.push(name);
            }
        }
    }
    if verbs.is_empty() {
        let mut names: Vec<String> = predicates
            .iter()
            .map(|p| p.split('(').next().unwrap_or(p).trim().to_lowercase())
            .collect();
        names.sort();
        names.dedup();
        return format!("General discussion: {}", names.join(", "));
    }
    let winner = (0..3).max_by_key(|&c| (votes[c], 3 - c)).expect("three classes");
    verbs.sort();
    let concept = word_tokens(CONCEPTS[winner]).join(" ");
    format!("{}: {} with {concept}", FAMILY_NAMES[winner], verbs.join(", "))
}

/// Answers chat-completion requests with [`rationale`] or [`summary`].
#[derive(Debug, Default, Clone)]
pub struct SyntheticOracle;

impl SyntheticOracle {
    pub fn respond(&self, prompt: &str) -> Option<String> {
        if prompt.starts_with("Your task is to analyze the attitude") {
            let sentence = between(prompt, "attitude of the [", "] towards the [")?;
            let target = between(prompt, "] towards the [", "] using first-order logic")?;
            return Some(rationale(sentence, target));
        }
        if prompt.starts_with("You are provided with several descriptions") {
            let (_, list) = prompt.split_once("\n\n")?;
            let lines: Vec<&str> = list.lines().filter(|l| !l.trim().is_empty()).collect();
            return Some(summary(&lines));
        }
        None
    }
}

impl Transport for SyntheticOracle {
    fn post_json(&self, url: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportError> {
        if !url.ends_with("/chat/completions") {
            return Err(TransportError::Status {
                code: 404,
                body: format!("no such endpoint {url}"),
            });
        }
        let prompt = body
            .pointer("/messages/0/content")
            .and_then(Value::as_str)
            .ok_or_else(|| TransportError::Status {
                code: 400,
                body: "missing message content".into(),
            })?;
        let content = self.respond(prompt).ok_or_else(|| TransportError::Status {
            code: 400,
            body: "unrecognized prompt".into(),
        })?;
        Ok(json!({"choices": [{"message": {"role": "assistant", "content": content}}]}))
    }
}

pub const FIXTURE_TRAIN: usize = 32;
pub const FIXTURE_DEV: usize = 48;
/// K grid of the larger library used for filter-count sweeps.
pub const WIDE_K_GRID: [usize; 1] = [64];

/// Settings for the synthetic corpus: small embeddings, an oracle model
/// name, and a schedule long enough for 32 examples.
pub fn fixture_config() -> RunConfig {
    let mut cfg = RunConfig {
        mode: Mode::Replay,
        cache_dir: PathBuf::from("."),
        ..RunConfig::default()
    };
    cfg.llm.model = "synthetic-oracle".to_string();
    cfg.embedding.provider = ProviderKind::TokenHash;
    cfg.embedding.dimension = 64;
    cfg.kernel.n_filters = 4;
    cfg.kernel.g = 2;
    cfg.train = TrainConfig {
        batch_size: 8,
        max_epochs: 60,
        patience: Some(20),
        trials: 1,
        ..TrainConfig::default()
    };
    cfg.train.optimizer.lr = 5e-3;
    cfg
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub cache_entries: usize,
}

/// Writes `train.csv`, `dev.csv`, `config.toml` and a sorted
/// `llm_cache.jsonl` holding every answer a replay run of `cfg` needs:
/// rationales for both splits and summaries for inductions over the
/// training split with `cfg`'s K grid and with [`WIDE_K_GRID`].
pub fn write_fixture(dir: &Path, cfg: &RunConfig) -> Result<Fixture, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io {
        path: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let train = generate(FIXTURE_TRAIN, &TRAIN_TARGETS, cfg.seed);
    let dev = generate(FIXTURE_DEV, &DEV_TARGETS, cfg.seed.wrapping_add(1));
    write_dataset(dir.join("train.csv"), &train, cfg.labels)?;
    write_dataset(dir.join("dev.csv"), &dev, cfg.labels)?;

    let gateway = Gateway::new(cfg.llm.clone(), Mode::Record, Arc::new(SyntheticOracle), JsonlCache::in_memory())
        .with_fixed_timestamp(0);
    let fp = cfg.fingerprint();
    let (train_records, _) = generate_fol(&train, cfg.labels, &gateway, &fp)?;
    generate_fol(&dev, cfg.labels, &gateway, &fp)?;
    let embedder = cfg.embedder()?;
    induce_library(&train_records, cfg, &gateway, embedder.as_ref())?;
    let mut wide = cfg.clone();
    wide.schema.k_grid = WIDE_K_GRID.to_vec();
    induce_library(&train_records, &wide, &gateway, embedder.as_ref())?;

    let cache_path = dir.join(crate::config::LLM_CACHE_FILE);
    gateway.cache().write_sorted(&cache_path).map_err(|e| PipelineError::Io {
        path: cache_path.display().to_string(),
        message: e.to_string(),
    })?;
    write_file(dir.join("config.toml"), &cfg.to_toml())?;
    Ok(Fixture {
        train,
        dev,
        cache_entries: gateway.cache().len(),
    })
}
