//! First-error evaluation metrics.
//!
//! Samples are split by ground truth into an error subset (a wrong step
//! exists) and a correct subset (fully correct). A prediction scores on the
//! error subset iff it names exactly the first wrong step, and on the
//! correct subset iff it declares the sample clean. The headline metric is
//! the harmonic mean of the two subset accuracies; ArithACC is their
//! subset-size-weighted arithmetic mean. Accuracies are percentages in
//! [0, 100], computed at full precision and rounded only for display.

use std::collections::BTreeMap;
use std::future::Future;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EvalSample, ALL_CORRECT};
use crate::scoring::FirstErrorPrediction;

pub const REPORT_SCHEMA: &str = "rprm-report/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("accuracy {0} outside [0, 100]")]
    OutOfRange(f64),
    #[error("both subsets are empty")]
    EmptySubsets,
    #[error("prediction set mismatch: {0}")]
    PredictionMismatch(String),
    #[error("report needs at least one dataset")]
    NoDatasets,
    #[error("invalid sweep: {0}")]
    BadSweep(String),
    #[error("report parse: {0}")]
    BadReport(String),
}

/// Accuracies of the two ground-truth subsets, with their sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracies {
    pub error_acc: f64,
    pub correct_acc: f64,
    pub n_error: usize,
    pub n_correct: usize,
}

/// Harmonic mean of the two subset accuracies: 2ab/(a+b), 0 when both are 0.
pub fn harmonic_f1(error_acc: f64, correct_acc: f64) -> Result<f64, EvalError> {
    for value in [error_acc, correct_acc] {
        if !(0.0..=100.0).contains(&value) {
            return Err(EvalError::OutOfRange(value));
        }
    }
    let sum = error_acc + correct_acc;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * error_acc * correct_acc / sum)
}

/// Subset-size-weighted arithmetic mean of the two accuracies.
pub fn arith_acc(
    error_acc: f64,
    n_error: usize,
    correct_acc: f64,
    n_correct: usize,
) -> Result<f64, EvalError> {
    for value in [error_acc, correct_acc] {
        if !(0.0..=100.0).contains(&value) {
            return Err(EvalError::OutOfRange(value));
        }
    }
    if n_error == 0 && n_correct == 0 {
        return Err(EvalError::EmptySubsets);
    }
    let total = (n_error + n_correct) as f64;
    Ok((error_acc * n_error as f64 + correct_acc * n_correct as f64) / total)
}

/// Grade predictions against ground truth, matched by id. Every sample needs
/// exactly one prediction; stray or duplicate prediction ids are errors. An
/// empty subset scores 0.
pub fn score_predictions(
    samples: &[EvalSample],
    predictions: &[FirstErrorPrediction],
) -> Result<SubsetAccuracies, EvalError> {
    let mut by_id: BTreeMap<&str, i64> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(&p.sample_id, p.predicted_index).is_some() {
            return Err(EvalError::PredictionMismatch(format!(
                "duplicate prediction id {:?}",
                p.sample_id
            )));
        }
    }
    if by_id.len() != samples.len() {
        return Err(EvalError::PredictionMismatch(format!(
            "{} predictions for {} samples",
            by_id.len(),
            samples.len()
        )));
    }

    let mut n_error = 0usize;
    let mut n_correct = 0usize;
    let mut hit_error = 0usize;
    let mut hit_correct = 0usize;
    for sample in samples {
        let predicted = *by_id.get(sample.id.as_str()).ok_or_else(|| {
            EvalError::PredictionMismatch(format!("no prediction for sample {:?}", sample.id))
        })?;
        if sample.first_error_index == ALL_CORRECT {
            n_correct += 1;
            if predicted == ALL_CORRECT {
                hit_correct += 1;
            }
        } else {
            n_error += 1;
            if predicted == sample.first_error_index {
                hit_error += 1;
            }
        }
    }

    let pct = |hits: usize, n: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * hits as f64 / n as f64
        }
    };
    Ok(SubsetAccuracies {
        error_acc: pct(hit_error, n_error),
        correct_acc: pct(hit_correct, n_correct),
        n_error,
        n_correct,
    })
}

/// Per-dataset metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub dataset: String,
    pub accuracies: SubsetAccuracies,
    pub f1: f64,
    pub arith_acc: f64,
}

/// The full report: one row per dataset plus the unweighted mean F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub datasets: Vec<DatasetMetrics>,
    pub avg_f1: f64,
    pub config_hash: String,
    /// Free-form provenance, e.g. score-trace hashes per dataset.
    pub provenance: BTreeMap<String, String>,
}

/// Compute F1 and ArithACC per dataset and the unweighted Avg.F1.
pub fn build_report(
    per_dataset: Vec<(String, SubsetAccuracies)>,
    config_hash: &str,
    provenance: BTreeMap<String, String>,
) -> Result<MetricsReport, EvalError> {
    if per_dataset.is_empty() {
        return Err(EvalError::NoDatasets);
    }
    let mut datasets = Vec::with_capacity(per_dataset.len());
    for (dataset, accuracies) in per_dataset {
        let f1 = harmonic_f1(accuracies.error_acc, accuracies.correct_acc)?;
        let arith = arith_acc(
            accuracies.error_acc,
            accuracies.n_error,
            accuracies.correct_acc,
            accuracies.n_correct,
        )?;
        datasets.push(DatasetMetrics {
            dataset,
            accuracies,
            f1,
            arith_acc: arith,
        });
    }
    let avg_f1 = datasets.iter().map(|d| d.f1).sum::<f64>() / datasets.len() as f64;
    Ok(MetricsReport {
        schema: REPORT_SCHEMA.to_string(),
        datasets,
        avg_f1,
        config_hash: config_hash.to_string(),
        provenance,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, EvalError> {
        let report: MetricsReport =
            serde_json::from_str(json).map_err(|e| EvalError::BadReport(e.to_string()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(EvalError::BadReport(format!(
                "wrong schema {:?}, expected {REPORT_SCHEMA:?}",
                report.schema
            )));
        }
        Ok(report)
    }

    /// Plain-text table, one dataset per row, values rounded to one decimal
    /// only here.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>9} {:>7}\n",
            "dataset", "error", "correct", "ArithACC", "F1"
        ));
        for row in &self.datasets {
            out.push_str(&format!(
                "{:<16} {:>8.1} {:>8.1} {:>9.1} {:>7.1}\n",
                row.dataset,
                row.accuracies.error_acc,
                row.accuracies.correct_acc,
                row.arith_acc,
                row.f1
            ));
        }
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>9} {:>7.1}\n",
            "Avg.F1", "", "", "", self.avg_f1
        ));
        out
    }
}

/// One sweep point: either a report or the error that k-run hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// CSV of (k, dataset, F1) rows plus one Avg.F1 row per k, preceded by a
    /// config-hash comment.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = format!("# config_hash={config_hash}\nk,dataset,f1\n");
        for row in &self.rows {
            if let Some(report) = &row.report {
                for d in &report.datasets {
                    out.push_str(&format!("{},{},{}\n", row.k, d.dataset, d.f1));
                }
                out.push_str(&format!("{},Avg.F1,{}\n", row.k, report.avg_f1));
            }
        }
        out
    }
}

/// Run the full pipeline once per k with everything else fixed. A failing k
/// is recorded and does not abort the others. Each k must be distinct and
/// below m.
pub async fn sweep_topk<F, Fut>(
    k_values: &[usize],
    m: usize,
    mut runner: F,
) -> Result<SweepReport, EvalError>
where
    F: FnMut(usize) -> Fut,
    Fut: Future<Output = Result<MetricsReport, String>>,
{
    let mut seen = std::collections::BTreeSet::new();
    for &k in k_values {
        if !seen.insert(k) {
            return Err(EvalError::BadSweep(format!("duplicate k value {k}")));
        }
        if k >= m {
            return Err(EvalError::BadSweep(format!(
                "k ({k}) must be below m ({m})"
            )));
        }
    }
    let mut rows = Vec::with_capacity(k_values.len());
    for &k in k_values {
        match runner(k).await {
            Ok(report) => rows.push(SweepRow {
                k,
                report: Some(report),
                error: None,
            }),
            Err(message) => rows.push(SweepRow {
                k,
                report: None,
                error: Some(message),
            }),
        }
    }
    Ok(SweepReport { rows })
}
