//! State-identification and power-retrieval metrics.
//!
//! Precision is `tp / (tp + fp)` and recall `tp / (tp + fn)`; any ratio with
//! a zero denominator is reported as 0.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} ground-truth values")]
    LengthMismatch(usize, usize),
    #[error("no samples to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionReport {
    pub mae: f64,
    pub mse: f64,
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts, EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn report_from_counts(c: &ConfusionCounts) -> ClassificationReport {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassificationReport {
        precision,
        recall,
        f1,
        accuracy: ratio(c.tp + c.tn, c.total()),
    }
}

pub fn classification_metrics(pred: &[u8], truth: &[u8]) -> Result<(ConfusionCounts, ClassificationReport), EvalError> {
    let c = confusion(pred, truth)?;
    Ok((c, report_from_counts(&c)))
}

/// MAE and MSE in the units of the inputs (watts).
pub fn regression_metrics(pred: &[f32], truth: &[f32]) -> Result<RegressionReport, EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    let (abs, sq) = pred.iter().zip(truth).fold((0.0f64, 0.0f64), |(a, s), (&p, &t)| {
        let d = p as f64 - t as f64;
        (a + d.abs(), s + d * d)
    });
    Ok(RegressionReport {
        mae: abs / n,
        mse: sq / n,
    })
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub appliance: String,
    pub split: String,
    pub classification: ClassificationReport,
    pub regression: RegressionReport,
}

pub const METRIC_CSV_HEADER: &str = "appliance,split,precision,recall,f1,accuracy,mae,mse";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRIC_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let c = &r.classification;
        let _ = writeln!(
            out,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.2},{:.2}",
            r.appliance, r.split, c.precision, c.recall, c.f1, c.accuracy, r.regression.mae, r.regression.mse
        );
    }
    out
}
