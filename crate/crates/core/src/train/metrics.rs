use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{LabelSet, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// Average of the two stance-bearing classes only.
    FavorAgainstOnly,
    AllClasses,
}

impl FromStr for MetricMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "favor-against-only" | "favor_against_only" => Ok(MetricMode::FavorAgainstOnly),
            "all-classes" | "all_classes" => Ok(MetricMode::AllClasses),
            other => Err(format!("unknown metric mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub mode: MetricMode,
    /// F1 for every class, keyed by label name.
    pub per_class_f1: BTreeMap<String, f64>,
    pub f_avg: f64,
    pub accuracy: f64,
    /// Classes that occur in neither golds nor predictions (their F1 is 0).
    pub absent_classes: Vec<String>,
}

/// Per-class F1 = 2PR/(P+R), 0 when P+R = 0.
pub fn macro_f1(preds: &[usize], golds: &[usize], labels: LabelSet, mode: MetricMode) -> Result<F1Report, TrainError> {
    if preds.len() != golds.len() {
        return Err(TrainError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let names = labels.names();
    let mut per_class_f1 = BTreeMap::new();
    let mut f1s = [0.0; 3];
    let mut absent_classes = Vec::new();
    for c in 0..3 {
        let tp = preds.iter().zip(golds).filter(|(&p, &g)| p == c && g == c).count() as f64;
        let pred_c = preds.iter().filter(|&&p| p == c).count() as f64;
        let gold_c = golds.iter().filter(|&&g| g == c).count() as f64;
        if pred_c == 0.0 && gold_c == 0.0 {
            absent_classes.push(names[c].to_string());
        }
        let precision = if pred_c > 0.0 { tp / pred_c } else { 0.0 };
        let recall = if gold_c > 0.0 { tp / gold_c } else { 0.0 };
        f1s[c] = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class_f1.insert(names[c].to_string(), f1s[c]);
    }
    let f_avg = match mode {
        MetricMode::FavorAgainstOnly => (f1s[0] + f1s[1]) / 2.0,
        MetricMode::AllClasses => f1s.iter().sum::<f64>() / 3.0,
    };
    let correct = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(F1Report {
        mode,
        per_class_f1,
        f_avg,
        accuracy: if golds.is_empty() { 0.0 } else { correct as f64 / golds.len() as f64 },
        absent_classes,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: usize = 0;
    const A: usize = 1;

    #[test]
    fn hand_computed_fixture() {
        // Favor: TP 1, FP 0, FN 1 → P 1, R 1/2, F1 2/3.
        // Against: TP 2, FP 1, FN 0 → P 2/3, R 1, F1 4/5.
        let r = macro_f1(&[F, A, A, A], &[F, A, F, A], LabelSet::FavorAgainstNone, MetricMode::FavorAgainstOnly).unwrap();
        assert!((r.per_class_f1["favor"] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_class_f1["against"] - 0.8).abs() < 1e-12);
        assert!((r.f_avg - 0.7333).abs() < 1e-4);
        assert_eq!(r.absent_classes, vec!["none"]);
    }

    #[test]
    fn perfect_predictions() {
        let g = [0, 1, 2, 0];
        for mode in [MetricMode::FavorAgainstOnly, MetricMode::AllClasses] {
            let r = macro_f1(&g, &g, LabelSet::ProConNeutral, mode).unwrap();
            assert_eq!(r.f_avg, 1.0);
            assert_eq!(r.accuracy, 1.0);
            assert!(r.per_class_f1.values().all(|&f| f == 1.0));
        }
    }

    #[test]
    fn order_does_not_matter() {
        let p = [0, 1, 2, 2, 1, 0, 0];
        let g = [0, 2, 2, 1, 1, 0, 1];
        let a = macro_f1(&p, &g, LabelSet::FavorAgainstNone, MetricMode::AllClasses).unwrap();
        let mut idx: Vec<usize> = (0..p.len()).rev().collect();
        idx.swap(0, 3);
        let p2: Vec<usize> = idx.iter().map(|&i| p[i]).collect();
        let g2: Vec<usize> = idx.iter().map(|&i| g[i]).collect();
        let b = macro_f1(&p2, &g2, LabelSet::FavorAgainstNone, MetricMode::AllClasses).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            macro_f1(&[0], &[], LabelSet::FavorAgainstNone, MetricMode::AllClasses),
            Err(TrainError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
