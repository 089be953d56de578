//! Two-stage retrieval: question-level retrieval produces k prompt
//! references and an m-question pool (m > k); all solution steps of those m
//! questions form a steps database that the target step then queries for r
//! reference steps. The second stage can never escape the first stage's
//! pool.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusStore, SolutionRecord};
use crate::embedding::pca::PcaModel;
use crate::embedding::{
    cosine_slices, Embedder, EmbeddingError, ReducedEmbedding, SimilarityIndex, Space,
};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("question {id:?} from index is missing from the corpus store")]
    UnknownQuestion { id: String },
    #[error("step pool was built with PCA fingerprint {expected}, query has {got}")]
    PoolFingerprintMismatch { expected: String, got: String },
}

/// Knobs of the two-stage mechanism. `m > k` is required unless both are 0
/// (retrieval disabled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Reference questions placed in the prompt.
    pub k: usize,
    /// Questions whose solutions feed the step pool.
    pub m: usize,
    /// Reference steps placed in the prompt.
    pub r: usize,
    #[serde(default = "default_dim")]
    pub question_dim: usize,
    #[serde(default = "default_dim")]
    pub step_dim: usize,
    #[serde(default = "default_true")]
    pub exclude_self: bool,
}

fn default_dim() -> usize {
    128
}

fn default_true() -> bool {
    true
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 2,
            m: 8,
            r: 3,
            question_dim: 128,
            step_dim: 128,
            exclude_self: true,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 && self.m == 0 {
            return Ok(());
        }
        if self.m <= self.k {
            return Err(RetrievalError::InvalidConfig(format!(
                "m ({}) must exceed k ({})",
                self.m, self.k
            )));
        }
        Ok(())
    }

    /// Retrieval fully disabled: prompts degrade to the plain template.
    pub fn is_disabled(&self) -> bool {
        self.k == 0 && self.m == 0 && self.r == 0
    }
}

/// The question being scored, with its id when it comes from the corpus
/// (used for self-exclusion).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetQuestion {
    pub text: String,
    pub id: Option<String>,
}

/// A retrieved question with its solutions, the (question, solution) value
/// pair of question-level retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionHit {
    pub question_id: String,
    pub score: f64,
    pub question_text: String,
    pub solutions: Vec<SolutionRecord>,
}

/// Output of stage one: the m-best ranking and its k-prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionRetrieval {
    pub top_k: Vec<QuestionHit>,
    pub top_m: Vec<QuestionHit>,
    /// Set when exclusions left fewer than m candidates; all available were
    /// returned.
    pub pool_exhausted: bool,
}

/// One step of one solution of a top-m question.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepPoolEntry {
    pub question_id: String,
    pub solution_id: String,
    /// 1-based.
    pub step_index: usize,
    pub text: String,
}

/// The steps database of stage two.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPool {
    entries: Vec<StepPoolEntry>,
    vectors: Vec<Vec<f64>>,
    model_fingerprint: String,
    /// Hash of the question retrieval that built this pool.
    provenance: String,
}

impl StepPool {
    /// Assemble a pool from already-reduced rows. Entries and vectors must
    /// align; rows must share a dimension and be nonzero.
    pub fn from_parts(
        entries: Vec<StepPoolEntry>,
        vectors: Vec<Vec<f64>>,
        model_fingerprint: impl Into<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, RetrievalError> {
        if entries.len() != vectors.len() {
            return Err(RetrievalError::InvalidConfig(format!(
                "{} entries for {} vectors",
                entries.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        for v in &vectors {
            if v.len() != dim {
                return Err(RetrievalError::Embedding(
                    EmbeddingError::DimensionMismatch {
                        expected: dim,
                        got: v.len(),
                    },
                ));
            }
            if v.iter().map(|x| x * x).sum::<f64>() == 0.0 {
                return Err(RetrievalError::Embedding(EmbeddingError::ZeroNorm));
            }
        }
        Ok(Self {
            entries,
            vectors,
            model_fingerprint: model_fingerprint.into(),
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[StepPoolEntry] {
        &self.entries
    }

    /// Reduced vectors, row-aligned with [`Self::entries`].
    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn model_fingerprint(&self) -> &str {
        &self.model_fingerprint
    }
}

/// A retrieved reference step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepHit {
    pub question_id: String,
    pub solution_id: String,
    pub step_index: usize,
    pub text: String,
    pub score: f64,
}

/// Everything the prompt needs from retrieval: up to k reference questions
/// and up to r reference steps, both descending by score.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalBundle {
    pub reference_questions: Vec<QuestionHit>,
    pub reference_steps: Vec<StepHit>,
    pub config: RetrievalConfig,
    pub pool_exhausted: bool,
}

impl RetrievalBundle {
    pub fn empty(config: RetrievalConfig) -> Self {
        Self {
            reference_questions: Vec::new(),
            reference_steps: Vec::new(),
            config,
            pool_exhausted: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.reference_questions.is_empty() && self.reference_steps.is_empty()
    }

    /// Line-delimited audit record for inspection and caching. `scores`
    /// concatenates the question-hit scores with the step-hit scores, in
    /// bundle order.
    pub fn to_audit_json(&self, target_id: &str) -> String {
        let refs_q: Vec<serde_json::Value> = self
            .reference_questions
            .iter()
            .map(|h| serde_json::json!({"id": h.question_id, "score": h.score}))
            .collect();
        let refs_s: Vec<serde_json::Value> = self
            .reference_steps
            .iter()
            .map(|h| {
                serde_json::json!({
                    "question_id": h.question_id,
                    "solution_id": h.solution_id,
                    "step_index": h.step_index,
                    "score": h.score,
                })
            })
            .collect();
        let scores: Vec<f64> = self
            .reference_questions
            .iter()
            .map(|h| h.score)
            .chain(self.reference_steps.iter().map(|h| h.score))
            .collect();
        serde_json::json!({
            "target_id": target_id,
            "refs_q": refs_q,
            "refs_s": refs_s,
            "scores": scores,
        })
        .to_string()
    }
}

fn exclusion_set(
    store: &CorpusStore,
    target: &TargetQuestion,
    cfg: &RetrievalConfig,
) -> BTreeSet<String> {
    let mut exclude = BTreeSet::new();
    if !cfg.exclude_self {
        return exclude;
    }
    match &target.id {
        Some(id) => {
            exclude.insert(id.clone());
        }
        None => {
            for id in store.question_ids_with_text(&target.text) {
                exclude.insert(id.to_string());
            }
        }
    }
    exclude
}

/// Stage one. `query` is the reduced embedding of the target question. The
/// top-m ranking is exact over the index minus exclusions; top-k is its
/// prefix; every hit carries all of that question's solutions.
pub fn retrieve_questions(
    index: &SimilarityIndex,
    store: &CorpusStore,
    query: &ReducedEmbedding,
    target: &TargetQuestion,
    cfg: &RetrievalConfig,
) -> Result<QuestionRetrieval, RetrievalError> {
    cfg.validate()?;
    if cfg.m == 0 {
        return Ok(QuestionRetrieval {
            top_k: Vec::new(),
            top_m: Vec::new(),
            pool_exhausted: false,
        });
    }
    let exclude = exclusion_set(store, target, cfg);
    let ranked = index.top_k(query, cfg.m, &exclude)?;
    let pool_exhausted = ranked.len() < cfg.m;

    let mut top_m = Vec::with_capacity(ranked.len());
    for (id, score) in ranked {
        let question = store
            .question(&id)
            .ok_or_else(|| RetrievalError::UnknownQuestion { id: id.clone() })?;
        let mut solutions = store.solutions(&id).to_vec();
        solutions.sort_by(|a, b| a.solution_id.cmp(&b.solution_id));
        top_m.push(QuestionHit {
            question_id: id,
            score,
            question_text: question.text.clone(),
            solutions,
        });
    }
    let top_k = top_m.iter().take(cfg.k).cloned().collect();
    Ok(QuestionRetrieval {
        top_k,
        top_m,
        pool_exhausted,
    })
}

fn retrieval_provenance(top_m: &[QuestionHit]) -> String {
    let mut hasher = Sha256::new();
    for hit in top_m {
        hasher.update(hit.question_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(hit.score.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Stage two, pool construction: every step of every solution of every
/// top-m question, embedded (cache-served where possible) and reduced with
/// the global step-space model. Entry order is (question rank, solution id,
/// step index).
pub async fn build_step_pool(
    top_m: &[QuestionHit],
    step_model: &PcaModel,
    embedder: &Embedder,
) -> Result<StepPool, RetrievalError> {
    if step_model.space() != Space::Step {
        return Err(RetrievalError::Embedding(EmbeddingError::SpaceMismatch {
            expected: Space::Step,
            got: step_model.space(),
        }));
    }
    let mut entries = Vec::new();
    for hit in top_m {
        for solution in &hit.solutions {
            for (i, text) in solution.steps.iter().enumerate() {
                entries.push(StepPoolEntry {
                    question_id: hit.question_id.clone(),
                    solution_id: solution.solution_id.clone(),
                    step_index: i + 1,
                    text: text.clone(),
                });
            }
        }
    }
    let provenance = retrieval_provenance(top_m);
    if entries.is_empty() {
        return Ok(StepPool {
            entries,
            vectors: Vec::new(),
            model_fingerprint: step_model.fingerprint().to_string(),
            provenance,
        });
    }
    let texts: Vec<String> = entries.iter().map(|e| e.text.clone()).collect();
    let embedded = embedder.embed_texts(&texts, Space::Step).await?;
    let mut vectors = Vec::with_capacity(entries.len());
    for raw in &embedded.vectors {
        vectors.push(step_model.transform(raw)?.values);
    }
    Ok(StepPool {
        entries,
        vectors,
        model_fingerprint: step_model.fingerprint().to_string(),
        provenance,
    })
}

/// Stage two, query: exact top-r cosine ranking of the pool against the
/// reduced target step, ties broken by (question id, solution id, step
/// index) ascending. Entries from `exclude_question` are removed first.
pub fn retrieve_steps(
    pool: &StepPool,
    query: &ReducedEmbedding,
    r: usize,
    exclude_question: Option<&str>,
) -> Result<Vec<StepHit>, RetrievalError> {
    if r == 0 || pool.is_empty() {
        return Ok(Vec::new());
    }
    if query.model_fingerprint != pool.model_fingerprint {
        return Err(RetrievalError::PoolFingerprintMismatch {
            expected: pool.model_fingerprint.clone(),
            got: query.model_fingerprint.clone(),
        });
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(pool.len());
    for (i, row) in pool.vectors.iter().enumerate() {
        if exclude_question.is_some_and(|q| pool.entries[i].question_id == q) {
            continue;
        }
        scored.push((i, cosine_slices(&query.values, row)?));
    }
    scored.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| pool.entries[a.0].cmp(&pool.entries[b.0]))
    });
    scored.truncate(r);
    Ok(scored
        .into_iter()
        .map(|(i, score)| {
            let e = &pool.entries[i];
            StepHit {
                question_id: e.question_id.clone(),
                solution_id: e.solution_id.clone(),
                step_index: e.step_index,
                text: e.text.clone(),
                score,
            }
        })
        .collect())
}

/// Immutable state the two-stage mechanism runs against.
pub struct RetrievalContext<'a> {
    pub question_index: &'a SimilarityIndex,
    pub question_model: &'a PcaModel,
    pub step_model: &'a PcaModel,
    pub store: &'a CorpusStore,
    pub embedder: &'a Embedder,
}

impl<'a> RetrievalContext<'a> {
    pub async fn reduce_question(&self, text: &str) -> Result<ReducedEmbedding, RetrievalError> {
        let result = self
            .embedder
            .embed_texts(&[text.to_string()], Space::Question)
            .await?;
        Ok(self.question_model.transform(&result.vectors[0])?)
    }

    pub async fn reduce_step(&self, text: &str) -> Result<ReducedEmbedding, RetrievalError> {
        let result = self
            .embedder
            .embed_texts(&[text.to_string()], Space::Step)
            .await?;
        Ok(self.step_model.transform(&result.vectors[0])?)
    }
}

/// Full two-stage retrieval for one (target question, target step) pair.
/// With k = m = r = 0 the bundle is empty and no provider call is made.
pub async fn two_stage_retrieve(
    ctx: &RetrievalContext<'_>,
    target_question: &TargetQuestion,
    target_step: &str,
    cfg: &RetrievalConfig,
) -> Result<RetrievalBundle, RetrievalError> {
    cfg.validate()?;
    if cfg.is_disabled() {
        return Ok(RetrievalBundle::empty(cfg.clone()));
    }

    let query = ctx.reduce_question(&target_question.text).await?;
    let questions =
        retrieve_questions(ctx.question_index, ctx.store, &query, target_question, cfg)?;

    let reference_steps = if cfg.r > 0 {
        let pool = build_step_pool(&questions.top_m, ctx.step_model, ctx.embedder).await?;
        if pool.is_empty() {
            Vec::new()
        } else {
            let step_query = ctx.reduce_step(target_step).await?;
            let exclude = if cfg.exclude_self {
                target_question.id.as_deref()
            } else {
                None
            };
            retrieve_steps(&pool, &step_query, cfg.r, exclude)?
        }
    } else {
        Vec::new()
    };

    Ok(RetrievalBundle {
        reference_questions: questions.top_k,
        reference_steps,
        config: cfg.clone(),
        pool_exhausted: questions.pool_exhausted,
    })
}
