mod common;

use common::random_graph;
use schemakernel::kernel::{KernelConfig, ModelParams, PreparedGraph};
use schemakernel::train::{score_set, train, LabelSet, MetricMode, PreparedExample, TrainConfig};

fn kernel() -> KernelConfig {
    KernelConfig {
        n_sub: 4,
        n_filt: 3,
        p: 2,
        g: 2,
        hop: 1,
        n_filters: 3,
        layers: 1,
        hidden: 6,
        classes: 3,
        ..KernelConfig::default()
    }
}

fn examples(n: usize, label_shift: usize) -> Vec<PreparedExample> {
    let cfg = kernel();
    (0..n)
        .map(|i| PreparedExample {
            text: format!("example {i}"),
            target: format!("t{}", i % 2),
            label: (i + label_shift) % 3,
            prepared: PreparedGraph::new(&random_graph(i as u64, 3 + i % 3, 5, 0.4), &cfg).unwrap(),
        })
        .collect()
}

fn config() -> TrainConfig {
    let mut c = TrainConfig {
        batch_size: 4,
        max_epochs: 40,
        patience: None,
        val_interval: 0.5,
        trials: 1,
        ..TrainConfig::default()
    };
    c.optimizer.lr = 1e-2;
    c
}

#[test]
fn zero_output_layer_gives_uniform_loss() {
    let cfg = kernel();
    let mut params = ModelParams::random(&cfg, 5, 1).unwrap();
    params.head.w2.fill(0.0);
    params.head.b2.fill(0.0);
    let (loss, _) = score_set(&examples(9, 0), &cfg, &params, LabelSet::FavorAgainstNone, MetricMode::AllClasses).unwrap();
    assert!((loss - 3f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn patience_one_stops_at_first_stale_validation() {
    let cfg = kernel();
    let train_set = examples(12, 0);
    // Dev labels disagree with training labels, so dev loss soon rises.
    let dev_set = examples(12, 1);
    let tc = TrainConfig {
        patience: Some(1),
        ..config()
    };
    let out = train(&train_set, &dev_set, &cfg, ModelParams::random(&cfg, 5, 2).unwrap(), &tc, LabelSet::FavorAgainstNone, 3)
        .unwrap();
    let v = &out.log.validations;
    assert!(out.log.stopped_early);
    let first_stale = v.iter().position(|r| !r.improved).expect("a stale validation");
    assert_eq!(first_stale, v.len() - 1);
    assert_eq!(out.log.total_steps, v.last().unwrap().step);
}

#[test]
fn patience_counts_consecutive_stale_validations() {
    let cfg = kernel();
    let tc = TrainConfig {
        patience: Some(3),
        ..config()
    };
    let out = train(&examples(12, 0), &examples(12, 1), &cfg, ModelParams::random(&cfg, 5, 2).unwrap(), &tc, LabelSet::FavorAgainstNone, 3)
        .unwrap();
    // Replay the rule over the logged validations.
    let mut best = f64::INFINITY;
    let mut stale = 0;
    let mut stop_at = None;
    for (i, r) in out.log.validations.iter().enumerate() {
        assert_eq!(r.improved, r.dev_loss < best);
        if r.dev_loss < best {
            best = r.dev_loss;
            stale = 0;
        } else {
            stale += 1;
        }
        if stale == 3 {
            stop_at = Some(i);
            break;
        }
    }
    assert_eq!(out.log.stopped_early, stop_at.is_some());
    if let Some(i) = stop_at {
        assert_eq!(i, out.log.validations.len() - 1);
    }
    assert_eq!(out.log.best_dev_loss, Some(best));
}

#[test]
fn best_parameters_reproduce_best_dev_loss() {
    let cfg = kernel();
    let dev_set = examples(9, 1);
    let out = train(&examples(12, 0), &dev_set, &cfg, ModelParams::random(&cfg, 5, 4).unwrap(), &config(), LabelSet::FavorAgainstNone, 5)
        .unwrap();
    let (loss, _) = score_set(&dev_set, &cfg, &out.best, LabelSet::FavorAgainstNone, MetricMode::AllClasses).unwrap();
    assert_eq!(Some(loss), out.log.best_dev_loss);
    let min = out.log.validations.iter().map(|v| v.dev_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(Some(min), out.log.best_dev_loss);
}

#[test]
fn validation_schedule_follows_interval() {
    let cfg = kernel();
    let out = train(&examples(12, 0), &examples(6, 0), &cfg, ModelParams::random(&cfg, 5, 4).unwrap(), &config(), LabelSet::FavorAgainstNone, 5)
        .unwrap();
    // 12 examples in batches of 4: 3 steps per epoch, validation every ceil(1.5) = 2 steps.
    assert_eq!(out.log.steps_per_epoch, 3);
    assert_eq!(out.log.validation_every, 2);
    assert_eq!(out.log.total_steps, 40 * 3);
    assert_eq!(out.log.validations.len(), 40 * 3 / 2);
    assert!(out.log.validations.iter().all(|v| v.step % 2 == 0));
}

#[test]
fn same_seed_same_run() {
    let cfg = kernel();
    let run = || {
        train(&examples(10, 0), &examples(5, 0), &cfg, ModelParams::random(&cfg, 5, 8).unwrap(), &config(), LabelSet::FavorAgainstNone, 11)
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log, b.log);
    assert_eq!(serde_json::to_string(&a.best).unwrap(), serde_json::to_string(&b.best).unwrap());
}

#[test]
fn memorizes_a_small_set() {
    let cfg = kernel();
    let set = examples(9, 0);
    let tc = TrainConfig {
        max_epochs: 300,
        ..config()
    };
    let out = train(&set, &[], &cfg, ModelParams::random(&cfg, 5, 6).unwrap(), &tc, LabelSet::FavorAgainstNone, 1).unwrap();
    let (_, report) = score_set(&set, &cfg, &out.best, LabelSet::FavorAgainstNone, MetricMode::AllClasses).unwrap();
    assert_eq!(report.accuracy, 1.0);
}
