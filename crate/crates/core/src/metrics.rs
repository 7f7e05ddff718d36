//! Per-class accuracies, the unseen-cluster mapping, harmonic means and the
//! combined evaluation report.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::clustering::{hungarian_map, LabelMap};
use crate::datasets::Dataset;
use crate::error::{dim_err, Error, Result};
use crate::inference::InferenceResult;

/// Mean over `classes` of the fraction of each class's samples predicted
/// correctly. Classes without samples are dropped with a warning.
pub fn per_class_accuracy(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<f64> {
    Ok(per_class_table(y_true, y_pred, classes)?.0)
}

/// As [`per_class_accuracy`], also returning `(class, count, accuracy)` rows.
fn per_class_table(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<(f64, Vec<(usize, usize, f64)>)> {
    if y_true.len() != y_pred.len() {
        return Err(dim_err(
            "per_class_accuracy",
            format!("{} labels vs {} predictions", y_true.len(), y_pred.len()),
        ));
    }
    let mut rows = Vec::with_capacity(classes.len());
    let mut empty = Vec::new();
    for &c in classes {
        let (mut n, mut hit) = (0usize, 0usize);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            if t == c {
                n += 1;
                hit += usize::from(p == c);
            }
        }
        if n == 0 {
            empty.push(c);
        } else {
            rows.push((c, n, hit as f64 / n as f64));
        }
    }
    if !empty.is_empty() {
        warn!("classes without samples excluded from the accuracy: {empty:?}");
    }
    if rows.is_empty() {
        return Err(Error::EvaluationUnavailable("no class in the set has samples".into()));
    }
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    Ok((mean, rows))
}

/// Per-class accuracy over the unseen classes `k_s..k_t` after matching
/// predicted unseen ids to true unseen classes. Only samples whose true
/// class is unseen take part.
pub fn unseen_accuracy(y_true: &[usize], y_pred: &[usize], k_s: usize, k_t: usize) -> Result<(f64, LabelMap)> {
    let (acc, map, _) = unseen_table(y_true, y_pred, k_s, k_t)?;
    Ok((acc, map))
}

#[allow(clippy::type_complexity)]
fn unseen_table(
    y_true: &[usize],
    y_pred: &[usize],
    k_s: usize,
    k_t: usize,
) -> Result<(f64, LabelMap, Vec<(usize, usize, f64)>)> {
    if y_true.len() != y_pred.len() {
        return Err(dim_err(
            "unseen_accuracy",
            format!("{} labels vs {} predictions", y_true.len(), y_pred.len()),
        ));
    }
    let k_u = k_t - k_s;
    let mut confusion = vec![vec![0u64; k_u]; k_u];
    let (mut truth, mut pred) = (Vec::new(), Vec::new());
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if (k_s..k_t).contains(&t) {
            if (k_s..k_t).contains(&p) {
                confusion[p - k_s][t - k_s] += 1;
            }
            truth.push(t);
            pred.push(p);
        }
    }
    if truth.is_empty() {
        return Err(Error::EvaluationUnavailable("no samples of unseen classes".into()));
    }
    let map = hungarian_map(&confusion, k_s)?;
    let mapped: Vec<usize> = pred.iter().map(|&p| map.apply(p)).collect();
    let classes: Vec<usize> = (k_s..k_t).collect();
    let (acc, rows) = per_class_table(&truth, &mapped, &classes)?;
    Ok((acc, map, rows))
}

/// `2ab / (a + b)`, zero when `a + b = 0`.
pub fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub seen: bool,
    pub count: usize,
    /// Classification accuracy (after the unseen mapping for unseen classes).
    pub accuracy: f64,
    pub semantic_recovery: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc_s: f64,
    pub acc_u: f64,
    pub acc_h: f64,
    pub sr_s: f64,
    pub sr_u: f64,
    pub sr_h: f64,
    pub label_map: LabelMap,
    pub tau: f64,
    pub per_class: Vec<ClassReport>,
}

/// Scores an inference result against the dataset's target ground truth.
pub fn evaluate(ds: &Dataset, inf: &InferenceResult) -> Result<EvalReport> {
    let y = ds
        .target_labels
        .as_ref()
        .ok_or_else(|| Error::EvaluationUnavailable("dataset has no target labels".into()))?;
    let y_tilde = inf
        .y_tilde
        .as_ref()
        .ok_or_else(|| Error::EvaluationUnavailable("no semantic-recovery predictions (full attributes missing)".into()))?;
    if ds.attributes_full.is_none() {
        return Err(Error::EvaluationUnavailable("dataset has no full attribute matrix".into()));
    }
    if inf.y_hat.len() != y.len() || y_tilde.len() != y.len() {
        return Err(dim_err(
            "evaluate",
            format!("{} predictions for {} target samples", inf.y_hat.len(), y.len()),
        ));
    }
    let (k_s, k_t) = (ds.k_s, ds.k_t);
    let seen: Vec<usize> = (0..k_s).collect();
    let unseen: Vec<usize> = (k_s..k_t).collect();

    let (acc_s, acc_s_rows) = per_class_table(y, &inf.y_hat, &seen)?;
    let (acc_u, label_map, acc_u_rows) = unseen_table(y, &inf.y_hat, k_s, k_t)?;
    let (sr_s, sr_s_rows) = per_class_table(y, y_tilde, &seen)?;
    let (sr_u, sr_u_rows) = per_class_table(y, y_tilde, &unseen)?;

    let mut per_class = Vec::new();
    for (acc_rows, sr_rows, is_seen) in [(acc_s_rows, sr_s_rows, true), (acc_u_rows, sr_u_rows, false)] {
        for ((class, count, accuracy), (_, _, sr)) in acc_rows.into_iter().zip(sr_rows) {
            per_class.push(ClassReport {
                class,
                seen: is_seen,
                count,
                accuracy,
                semantic_recovery: sr,
            });
        }
    }
    Ok(EvalReport {
        acc_s,
        acc_u,
        acc_h: harmonic(acc_s, acc_u),
        sr_s,
        sr_u,
        sr_h: harmonic(sr_s, sr_u),
        label_map,
        tau: inf.tau,
        per_class,
    })
}

impl EvalReport {
    /// Aligned table of the six headline metrics in percent.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>8} {:>8} {:>8} | {:>8} {:>8} {:>8}", "Acc_s", "Acc_u", "Acc_h", "SR_s", "SR_u", "SR_h");
        let _ = writeln!(
            s,
            "{:>8.1} {:>8.1} {:>8.1} | {:>8.1} {:>8.1} {:>8.1}",
            100.0 * self.acc_s,
            100.0 * self.acc_u,
            100.0 * self.acc_h,
            100.0 * self.sr_s,
            100.0 * self.sr_u,
            100.0 * self.sr_h
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_class_examples() {
        assert_eq!(per_class_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(per_class_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 0], &[0, 1]).unwrap(), 0.75);
        assert_eq!(per_class_accuracy(&[0, 0, 1, 1], &[1, 1, 0, 0], &[0, 1]).unwrap(), 0.0);
    }

    #[test]
    fn empty_class_is_excluded() {
        assert_eq!(per_class_accuracy(&[0, 0], &[0, 1], &[0, 1]).unwrap(), 0.5);
        assert!(per_class_accuracy(&[0], &[0], &[3]).is_err());
    }

    #[test]
    fn permuted_unseen_predictions_are_recovered() {
        let truth = [2, 2, 3, 3, 4, 4];
        let pred = [4, 4, 2, 2, 3, 3];
        let (acc, map) = unseen_accuracy(&truth, &pred, 2, 5).unwrap();
        assert_eq!(acc, 1.0);
        assert_eq!(map.mapping, vec![3, 4, 2]);
    }

    #[test]
    fn constant_unseen_prediction_scores_one_over_u() {
        let truth = [2, 2, 3, 3, 4, 4];
        let (acc, _) = unseen_accuracy(&truth, &[3; 6], 2, 5).unwrap();
        assert!((acc - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_unseen_samples_is_unavailable() {
        assert!(matches!(unseen_accuracy(&[0, 1], &[0, 1], 2, 4), Err(Error::EvaluationUnavailable(_))));
    }

    #[test]
    fn harmonic_examples() {
        assert!((harmonic(0.6, 0.6) - 0.6).abs() < 1e-15);
        assert_eq!(harmonic(0.0, 0.7), 0.0);
        assert_eq!(harmonic(0.0, 0.0), 0.0);
        assert!((harmonic(0.828, 0.476) - 0.605).abs() < 1e-3);
    }
}
