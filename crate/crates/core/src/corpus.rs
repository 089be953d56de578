//! Question/solution corpus: loading, validation, and expansion of labeled
//! solutions into per-step prediction samples.
//!
//! The on-disk format is UTF-8 line-delimited JSON. Each corpus line is one
//! question with its solutions:
//!
//! ```text
//! {"schema":"rprm-corpus/1","id":"q1","dataset":"prm800k","question":"...",
//!  "solutions":[{"solution_id":"s1","steps":["..."],"step_labels":[1,1,0]}]}
//! ```
//!
//! Eval files are one record per line:
//!
//! ```text
//! {"schema":"rprm-eval/1","id":"e1","question":"...","steps":["..."],"first_error_index":3}
//! ```
//!
//! Step indices are 1-based everywhere; `first_error_index == -1` means the
//! solution is fully correct.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema tag expected on corpus lines.
pub const CORPUS_SCHEMA: &str = "rprm-corpus/1";
/// Schema tag expected on eval lines.
pub const EVAL_SCHEMA: &str = "rprm-eval/1";

/// Sentinel for "no wrong step" in eval records and predictions.
pub const ALL_CORRECT: i64 = -1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: wrong schema {found:?}, expected {expected:?}")]
    WrongSchema {
        line: usize,
        found: String,
        expected: &'static str,
    },
    #[error("line {line}: duplicate question id {id:?}")]
    DuplicateQuestion { line: usize, id: String },
    #[error("line {line}: duplicate solution id {id:?}")]
    DuplicateSolution { line: usize, id: String },
    #[error("line {line}: question text is empty for id {id:?}")]
    EmptyQuestion { line: usize, id: String },
    #[error("line {line}: solution {id:?} has no steps")]
    EmptySteps { line: usize, id: String },
    #[error("line {line}: solution {id:?} has {labels} labels for {steps} steps")]
    LabelLengthMismatch {
        line: usize,
        id: String,
        labels: usize,
        steps: usize,
    },
    #[error("line {line}: solution {id:?} has non-prefix labels (a 1 follows a 0)")]
    NonPrefixLabels { line: usize, id: String },
    #[error("line {line}: solution {id:?} has label {value} outside {{0,1}}")]
    LabelOutOfRange { line: usize, id: String, value: i64 },
    #[error(
        "line {line}: eval record {id:?} has first_error_index {index} outside -1 or 1..={steps}"
    )]
    BadErrorIndex {
        line: usize,
        id: String,
        index: i64,
        steps: usize,
    },
    #[error("solution {solution_id:?} of question {question_id:?} has no step labels")]
    MissingLabels {
        question_id: String,
        solution_id: String,
    },
    #[error("duplicate question id {id:?} while merging corpora")]
    MergeConflict { id: String },
}

/// A math question in the retrieval pool or training corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: String,
    pub text: String,
}

/// One step-segmented solution to a question, optionally with per-step
/// correctness labels. Labels follow prefix semantics: label `j` is 1 iff
/// steps 1..=j are all correct, so once a 0 appears every later label is 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub question_id: String,
    pub solution_id: String,
    pub steps: Vec<String>,
    pub step_labels: Option<Vec<u8>>,
}

impl SolutionRecord {
    /// 1-based index of the first wrong step, or `None` when every step is
    /// correct. `None` is also returned when the solution is unlabeled.
    pub fn first_error_index(&self) -> Option<usize> {
        self.step_labels
            .as_ref()
            .and_then(|labels| labels.iter().position(|&l| l == 0).map(|p| p + 1))
    }
}

/// One (question, prefix, target step, label) prediction sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSample {
    pub question_id: String,
    pub solution_id: String,
    /// 1-based target step index j.
    pub step_index: usize,
    pub prior_steps: Vec<String>,
    pub target_step: String,
    pub label: u8,
}

/// One first-error-localization evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    pub question: String,
    pub steps: Vec<String>,
    /// 1-based index of the earliest wrong step, or -1 when all correct.
    pub first_error_index: i64,
}

impl EvalSample {
    pub fn is_fully_correct(&self) -> bool {
        self.first_error_index == ALL_CORRECT
    }
}

/// Immutable corpus of questions and their solutions. File order of the
/// questions is preserved for lossless round-trips.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    questions: Vec<QuestionRecord>,
    by_id: BTreeMap<String, usize>,
    solutions: BTreeMap<String, Vec<SolutionRecord>>,
}

impl CorpusStore {
    pub fn question_count(&self) -> usize {
        self.questions.len()
    }

    pub fn question(&self, id: &str) -> Option<&QuestionRecord> {
        self.by_id.get(id).map(|&i| &self.questions[i])
    }

    pub fn solutions(&self, question_id: &str) -> &[SolutionRecord] {
        self.solutions
            .get(question_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Questions in original file order.
    pub fn questions(&self) -> &[QuestionRecord] {
        &self.questions
    }

    /// Question ids in ascending order.
    pub fn sorted_question_ids(&self) -> Vec<&str> {
        self.by_id.keys().map(String::as_str).collect()
    }

    /// Ids of questions whose text equals `text` exactly.
    pub fn question_ids_with_text(&self, text: &str) -> Vec<&str> {
        self.questions
            .iter()
            .filter(|q| q.text == text)
            .map(|q| q.id.as_str())
            .collect()
    }

    pub fn dataset_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for q in &self.questions {
            *counts.entry(q.dataset.clone()).or_insert(0) += 1;
        }
        counts
    }

    pub fn total_step_count(&self) -> usize {
        self.solutions
            .values()
            .flat_map(|sols| sols.iter())
            .map(|s| s.steps.len())
            .sum()
    }

    /// Absorb another corpus. Question ids must stay globally unique.
    pub fn merge(&mut self, other: CorpusStore) -> Result<(), CorpusError> {
        for q in other.questions {
            if self.by_id.contains_key(&q.id) {
                return Err(CorpusError::MergeConflict { id: q.id });
            }
            self.by_id.insert(q.id.clone(), self.questions.len());
            if let Some(sols) = other.solutions.get(&q.id) {
                self.solutions.insert(q.id.clone(), sols.clone());
            }
            self.questions.push(q);
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusLine {
    #[serde(default)]
    schema: Option<String>,
    id: String,
    #[serde(default)]
    dataset: Option<String>,
    question: String,
    #[serde(default)]
    solutions: Vec<SolutionLine>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionLine {
    solution_id: String,
    steps: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step_labels: Option<Vec<i64>>,
}

/// True when a parsed JSONL line is an artifact header rather than a record.
/// Headers carry the config snapshot hash of the run that wrote the file.
pub fn is_header_line(value: &serde_json::Value) -> bool {
    value.get("config_hash").is_some() && value.get("id").is_none()
}

fn validate_labels(
    line: usize,
    solution_id: &str,
    steps: usize,
    raw: &[i64],
) -> Result<Vec<u8>, CorpusError> {
    if raw.len() != steps {
        return Err(CorpusError::LabelLengthMismatch {
            line,
            id: solution_id.to_string(),
            labels: raw.len(),
            steps,
        });
    }
    let mut labels = Vec::with_capacity(raw.len());
    let mut seen_zero = false;
    for &v in raw {
        match v {
            0 => seen_zero = true,
            1 if seen_zero => {
                return Err(CorpusError::NonPrefixLabels {
                    line,
                    id: solution_id.to_string(),
                })
            }
            1 => {}
            other => {
                return Err(CorpusError::LabelOutOfRange {
                    line,
                    id: solution_id.to_string(),
                    value: other,
                })
            }
        }
        labels.push(v as u8);
    }
    Ok(labels)
}

/// Load a corpus file, rejecting the first malformed line with its number.
/// Records missing a "dataset" field are tagged with `dataset_tag`.
pub fn load_corpus(path: &Path, dataset_tag: &str) -> Result<CorpusStore, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_corpus_str(&content, dataset_tag)
}

/// Parse corpus content already in memory. See [`load_corpus`].
pub fn load_corpus_str(content: &str, dataset_tag: &str) -> Result<CorpusStore, CorpusError> {
    let mut store = CorpusStore::default();
    let mut solution_ids: BTreeSet<String> = BTreeSet::new();

    for (idx, raw_line) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line == 1 {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
                if is_header_line(&value) {
                    continue;
                }
            }
        }
        let record: CorpusLine =
            serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        if let Some(schema) = &record.schema {
            if schema != CORPUS_SCHEMA {
                return Err(CorpusError::WrongSchema {
                    line,
                    found: schema.clone(),
                    expected: CORPUS_SCHEMA,
                });
            }
        }
        if record.question.is_empty() {
            return Err(CorpusError::EmptyQuestion {
                line,
                id: record.id,
            });
        }
        if store.by_id.contains_key(&record.id) {
            return Err(CorpusError::DuplicateQuestion {
                line,
                id: record.id,
            });
        }

        let mut solutions = Vec::with_capacity(record.solutions.len());
        for sol in record.solutions {
            if sol.steps.is_empty() {
                return Err(CorpusError::EmptySteps {
                    line,
                    id: sol.solution_id,
                });
            }
            if !solution_ids.insert(sol.solution_id.clone()) {
                return Err(CorpusError::DuplicateSolution {
                    line,
                    id: sol.solution_id,
                });
            }
            let step_labels = match &sol.step_labels {
                Some(raw) => Some(validate_labels(
                    line,
                    &sol.solution_id,
                    sol.steps.len(),
                    raw,
                )?),
                None => None,
            };
            solutions.push(SolutionRecord {
                question_id: record.id.clone(),
                solution_id: sol.solution_id,
                steps: sol.steps,
                step_labels,
            });
        }

        store.by_id.insert(record.id.clone(), store.questions.len());
        store.solutions.insert(record.id.clone(), solutions);
        store.questions.push(QuestionRecord {
            id: record.id,
            dataset: record.dataset.unwrap_or_else(|| dataset_tag.to_string()),
            text: record.question,
        });
    }

    Ok(store)
}

/// Serialize a store back to the line format, preserving question order.
pub fn serialize_corpus(store: &CorpusStore) -> String {
    let mut out = String::new();
    for q in &store.questions {
        let line = CorpusLine {
            schema: Some(CORPUS_SCHEMA.to_string()),
            id: q.id.clone(),
            dataset: Some(q.dataset.clone()),
            question: q.text.clone(),
            solutions: store
                .solutions(&q.id)
                .iter()
                .map(|s| SolutionLine {
                    solution_id: s.solution_id.clone(),
                    steps: s.steps.clone(),
                    step_labels: s
                        .step_labels
                        .as_ref()
                        .map(|ls| ls.iter().map(|&l| l as i64).collect()),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&line).expect("corpus line serializes"));
        out.push('\n');
    }
    out
}

/// Expand every labeled solution into per-step samples.
///
/// For a solution whose first wrong step is f (or f = n+1 when none), samples
/// j = 1..=min(f, n) are emitted and nothing after: the prompt contract
/// assumes all prior steps of a sample are correct, so steps past the first
/// error can never be scored. Output is ordered by (question id, solution id,
/// step index) ascending.
pub fn enumerate_step_samples(store: &CorpusStore) -> Result<Vec<StepSample>, CorpusError> {
    let mut samples = Vec::new();
    for qid in store.sorted_question_ids() {
        let mut solutions: Vec<&SolutionRecord> = store.solutions(qid).iter().collect();
        solutions.sort_by(|a, b| a.solution_id.cmp(&b.solution_id));
        for sol in solutions {
            let labels = sol.step_labels.as_ref().ok_or(CorpusError::MissingLabels {
                question_id: sol.question_id.clone(),
                solution_id: sol.solution_id.clone(),
            })?;
            let n = sol.steps.len();
            let cutoff = sol.first_error_index().unwrap_or(n + 1).min(n);
            for j in 1..=cutoff {
                samples.push(StepSample {
                    question_id: sol.question_id.clone(),
                    solution_id: sol.solution_id.clone(),
                    step_index: j,
                    prior_steps: sol.steps[..j - 1].to_vec(),
                    target_step: sol.steps[j - 1].clone(),
                    label: labels[j - 1],
                });
            }
        }
    }
    Ok(samples)
}

/// Adapt labeled solutions to the first-error evaluation shape.
/// Sample ids are `"{question_id}#{solution_id}"`.
pub fn to_eval_samples(store: &CorpusStore) -> Result<Vec<EvalSample>, CorpusError> {
    let mut samples = Vec::new();
    for qid in store.sorted_question_ids() {
        let question = store.question(qid).expect("id from store");
        let mut solutions: Vec<&SolutionRecord> = store.solutions(qid).iter().collect();
        solutions.sort_by(|a, b| a.solution_id.cmp(&b.solution_id));
        for sol in solutions {
            if sol.step_labels.is_none() {
                return Err(CorpusError::MissingLabels {
                    question_id: sol.question_id.clone(),
                    solution_id: sol.solution_id.clone(),
                });
            }
            samples.push(EvalSample {
                id: format!("{}#{}", qid, sol.solution_id),
                question: question.text.clone(),
                steps: sol.steps.clone(),
                first_error_index: sol
                    .first_error_index()
                    .map(|f| f as i64)
                    .unwrap_or(ALL_CORRECT),
            });
        }
    }
    Ok(samples)
}

#[derive(Debug, Serialize, Deserialize)]
struct EvalLine {
    #[serde(default)]
    schema: Option<String>,
    id: String,
    question: String,
    steps: Vec<String>,
    first_error_index: i64,
}

/// Load an eval file (`rprm-eval/1`).
pub fn load_eval_samples(path: &Path) -> Result<Vec<EvalSample>, CorpusError> {
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_eval_samples_str(&content)
}

pub fn load_eval_samples_str(content: &str) -> Result<Vec<EvalSample>, CorpusError> {
    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw_line) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw_line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line == 1 {
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
                if is_header_line(&value) {
                    continue;
                }
            }
        }
        let record: EvalLine =
            serde_json::from_str(trimmed).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        if let Some(schema) = &record.schema {
            if schema != EVAL_SCHEMA {
                return Err(CorpusError::WrongSchema {
                    line,
                    found: schema.clone(),
                    expected: EVAL_SCHEMA,
                });
            }
        }
        if record.steps.is_empty() {
            return Err(CorpusError::EmptySteps {
                line,
                id: record.id,
            });
        }
        let n = record.steps.len();
        if record.first_error_index != ALL_CORRECT
            && !(1..=n as i64).contains(&record.first_error_index)
        {
            return Err(CorpusError::BadErrorIndex {
                line,
                id: record.id,
                index: record.first_error_index,
                steps: n,
            });
        }
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::Malformed {
                line,
                message: format!("duplicate eval id {:?}", record.id),
            });
        }
        samples.push(EvalSample {
            id: record.id,
            question: record.question,
            steps: record.steps,
            first_error_index: record.first_error_index,
        });
    }
    Ok(samples)
}

/// Serialize eval samples to the line format.
pub fn serialize_eval_samples(samples: &[EvalSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let line = EvalLine {
            schema: Some(EVAL_SCHEMA.to_string()),
            id: s.id.clone(),
            question: s.question.clone(),
            steps: s.steps.clone(),
            first_error_index: s.first_error_index,
        };
        out.push_str(&serde_json::to_string(&line).expect("eval line serializes"));
        out.push('\n');
    }
    out
}
