//! Classification metrics, aggregation over seeds and the paired t-test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{preds} predictions for {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("no examples to score")]
    Empty,
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("differences have zero variance; the t statistic is undefined")]
    DegenerateSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub f1_real: f64,
    pub f1_misinfo: f64,
    /// `confusion[true][predicted]`, classes indexed real = 0, misinfo = 1.
    pub confusion: [[usize; 2]; 2],
    pub n_examples: usize,
}

fn f1(confusion: &[[usize; 2]; 2], class: usize) -> f64 {
    let other = 1 - class;
    let tp = confusion[class][class];
    let fp = confusion[other][class];
    let fn_ = confusion[class][other];
    let denom = 2 * tp + fp + fn_;
    if tp == 0 || denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn compute_metrics(preds: &[Label], labels: &[Label]) -> Result<MetricReport, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &y) in preds.iter().zip(labels) {
        confusion[y as usize][p as usize] += 1;
    }
    let n = preds.len();
    let f1_real = f1(&confusion, 0);
    let f1_misinfo = f1(&confusion, 1);
    Ok(MetricReport {
        macro_f1: (f1_real + f1_misinfo) / 2.0,
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / n as f64,
        f1_real,
        f1_misinfo,
        confusion,
        n_examples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
}

/// Mean and sample standard deviation of at least two values.
pub fn mean_std(values: &[f64]) -> Result<MeanStd, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewRuns(values.len()));
    }
    let n = values.len() as f64;
    // Shifting by the first value keeps a constant series exact.
    let base = values[0];
    let mean = base + values.iter().map(|v| v - base).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MeanStd { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub runs: usize,
    pub macro_f1: MeanStd,
    pub accuracy: MeanStd,
    pub f1_real: MeanStd,
    pub f1_misinfo: MeanStd,
}

pub fn aggregate_runs(reports: &[MetricReport]) -> Result<RunAggregate, EvalError> {
    let pick = |f: fn(&MetricReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(RunAggregate {
        runs: reports.len(),
        macro_f1: pick(|r| r.macro_f1)?,
        accuracy: pick(|r| r.accuracy)?,
        f1_real: pick(|r| r.f1_real)?,
        f1_misinfo: pick(|r| r.f1_misinfo)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub dof: usize,
}

/// Paired t-test on `a[i] - b[i]`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { preds: a.len(), labels: b.len() });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let MeanStd { mean, std } = mean_std(&diffs)?;
    if std == 0.0 {
        return Err(EvalError::DegenerateSeries);
    }
    let n = diffs.len();
    let t = mean / (std / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("dof >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTestResult { t, p, dof: n - 1 })
}
