//! Confusion counts, metrics, method comparison and the random baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocId;
use crate::extraction::{ExtractionResult, Method, PredictedLabel};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("prediction and gold document ids differ: {0}")]
    IdMismatch(String),
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("document {0} was labeled \"not addressed\"")]
    NotAddressed(DocId),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotAddressedPolicy {
    #[default]
    AsNegative,
    AsError,
}

/// Counts predictions against gold labels. Both sides must cover the same
/// document ids.
pub fn confusion(
    predictions: &BTreeMap<DocId, PredictedLabel>,
    golds: &BTreeMap<DocId, bool>,
    policy: NotAddressedPolicy,
) -> Result<ConfusionCounts, EvaluationError> {
    if let Some(id) = predictions.keys().find(|k| !golds.contains_key(*k)) {
        return Err(EvaluationError::IdMismatch(format!("{id} has a prediction but no gold label")));
    }
    if let Some(id) = golds.keys().find(|k| !predictions.contains_key(*k)) {
        return Err(EvaluationError::IdMismatch(format!("{id} has a gold label but no prediction")));
    }
    let mut c = ConfusionCounts::default();
    for (id, label) in predictions {
        if *label == PredictedLabel::NotAddressed && policy == NotAddressedPolicy::AsError {
            return Err(EvaluationError::NotAddressed(id.clone()));
        }
        match (label.is_positive(), golds[id]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Precision and recall with an empty denominator are 1.0 when the other
/// error count is also zero (nothing was missed or claimed wrongly), else 0.0.
pub fn metrics(c: &ConfusionCounts) -> Result<Metrics, EvaluationError> {
    let total = c.total();
    if total == 0 {
        return Err(EvaluationError::EmptyEvaluation);
    }
    let ratio = |num: u64, den: u64, other_errors: u64| {
        if den > 0 {
            num as f64 / den as f64
        } else if other_errors == 0 {
            1.0
        } else {
            0.0
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp, c.fn_);
    let recall = ratio(c.tp, c.tp + c.fn_, c.fp);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Metrics {
        accuracy: (c.tp + c.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Expected metrics of a predictor that says "true" with probability `p` on
/// data whose positive rate is `q`.
pub fn expected_random_metrics(p: f64, q: f64) -> Metrics {
    let tp = p * q;
    let fp = p * (1.0 - q);
    let fn_ = (1.0 - p) * q;
    let precision = if p > 0.0 { tp / p } else if fn_ == 0.0 { 1.0 } else { 0.0 };
    let recall = if q > 0.0 { tp / q } else if fp == 0.0 { 1.0 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Metrics {
        accuracy: p * q + (1.0 - p) * (1.0 - q),
        precision,
        recall,
        f1,
    }
}

/// Mean accuracy of `trials` seeded draws where both prediction and gold
/// are Bernoulli.
pub fn simulate_random_accuracy(p: f64, q: f64, trials: u64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| {
            let predicted = rng.random_bool(p);
            let gold = rng.random_bool(q);
            predicted == gold
        })
        .count();
    hits as f64 / trials as f64
}

/// All integer confusion matrices with `n` items and `positives` gold
/// positives whose metrics are each within `tol` of `target`.
pub fn solve_confusion(n: u64, positives: u64, target: &Metrics, tol: f64) -> Vec<ConfusionCounts> {
    let negatives = n.saturating_sub(positives);
    let mut out = Vec::new();
    for tp in 0..=positives {
        for fp in 0..=negatives {
            let c = ConfusionCounts::new(tp, fp, positives - tp, negatives - fp);
            let Ok(m) = metrics(&c) else { continue };
            if (m.accuracy - target.accuracy).abs() <= tol
                && (m.precision - target.precision).abs() <= tol
                && (m.recall - target.recall).abs() <= tol
                && (m.f1 - target.f1).abs() <= tol
            {
                out.push(c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_size: 15,
            test_size: 35,
            seed: 0,
        }
    }
}

/// Seeded shuffle of `ids` into train and test sets.
pub fn split_ids(ids: &[DocId], config: &SplitConfig) -> Result<(Vec<DocId>, Vec<DocId>), EvaluationError> {
    if config.train_size == 0 || config.test_size == 0 {
        return Err(EvaluationError::InvalidSplit("sizes must be positive".into()));
    }
    if config.train_size + config.test_size > ids.len() {
        return Err(EvaluationError::InvalidSplit(format!(
            "{} + {} cases requested but only {} available",
            config.train_size,
            config.test_size,
            ids.len()
        )));
    }
    let mut shuffled = ids.to_vec();
    shuffled.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
    let test = shuffled[config.train_size..config.train_size + config.test_size].to_vec();
    shuffled.truncate(config.train_size);
    Ok((shuffled, test))
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub acc: f64,
    pub pre: f64,
    pub rec: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub n: u64,
    pub positives: u64,
}

impl Report {
    /// Index of the best row per column (acc, pre, rec, f1); ties mark the
    /// first row.
    pub fn best(&self) -> [Option<usize>; 4] {
        let cols: [fn(&ReportRow) -> f64; 4] = [|r| r.acc, |r| r.pre, |r| r.rec, |r| r.f1];
        cols.map(|get| {
            self.rows
                .iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (i, r)| match best {
                    Some((_, v)) if v >= get(r) => best,
                    _ => Some((i, get(r))),
                })
                .map(|(i, _)| i)
        })
    }

    /// Plain-text table; the best value in each column is starred.
    pub fn to_text(&self) -> String {
        let best = self.best();
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}\n", "Method", "ACC", "PRE", "REC", "F1");
        for (i, r) in self.rows.iter().enumerate() {
            let cell = |col: usize, v: f64| {
                let mark = if best[col] == Some(i) { "*" } else { " " };
                format!("{v:>5.3}{mark}")
            };
            let _ = writeln!(
                out,
                "{:<width$}  {}  {}  {}  {}",
                r.method,
                cell(0, r.acc),
                cell(1, r.pre),
                cell(2, r.rec),
                cell(3, r.f1)
            );
        }
        let _ = writeln!(out, "n = {}, positives = {}", self.n, self.positives);
        out
    }
}

/// Scores each method's results against the gold labels. Rows follow the
/// order of `results`; values are rounded to three decimals.
pub fn compare(
    results: &[(Method, Vec<ExtractionResult>)],
    golds: &BTreeMap<DocId, bool>,
    policy: NotAddressedPolicy,
) -> Result<Report, EvaluationError> {
    let mut rows = Vec::with_capacity(results.len());
    for (method, rs) in results {
        let predictions: BTreeMap<DocId, PredictedLabel> = rs.iter().map(|r| (r.doc_id.clone(), r.label)).collect();
        if predictions.len() != rs.len() {
            return Err(EvaluationError::IdMismatch(format!("{method} has duplicate document ids")));
        }
        let m = metrics(&confusion(&predictions, golds, policy)?)?;
        rows.push(ReportRow {
            method: method.display_name().to_string(),
            acc: round3(m.accuracy),
            pre: round3(m.precision),
            rec: round3(m.recall),
            f1: round3(m.f1),
        });
    }
    Ok(Report {
        rows,
        n: golds.len() as u64,
        positives: golds.values().filter(|g| **g).count() as u64,
    })
}
