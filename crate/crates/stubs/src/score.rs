//! Stub scorer server: `POST /score {"prompt", "candidate_tokens": [p, n]}`
//! returns `{"logits": {p: f, n: f}}` under pluggable behaviors — fixed
//! logits, seeded pseudo-random logits, a label oracle that parses the
//! rendered prompt and answers with the ground-truth label, and a gated
//! oracle that only tells the truth when a marker string is present in the
//! prompt.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rprm_core::corpus::{EvalSample, ALL_CORRECT};
use rprm_core::prompting::{extract_current_step, extract_question, PromptTemplate};

/// Logit magnitude used by the oracle behaviors; sigma(2*8) saturates well
/// past any sensible threshold.
const ORACLE_LOGIT: f64 = 4.0;

/// Ground-truth lookup parsed out of rendered prompts. The template must
/// match the one the client rendered with (delimiters are what the parser
/// keys on).
#[derive(Debug, Clone)]
pub struct OracleConfig {
    template: PromptTemplate,
    labels: BTreeMap<(String, String), u8>,
}

impl OracleConfig {
    /// Label every (question, step) pair of an eval set: steps strictly
    /// before the first error are correct, the rest are not.
    pub fn from_eval_samples(samples: &[EvalSample], template: PromptTemplate) -> Self {
        let mut labels = BTreeMap::new();
        for sample in samples {
            for (i, step) in sample.steps.iter().enumerate() {
                let j = (i + 1) as i64;
                let label =
                    if sample.first_error_index == ALL_CORRECT || j < sample.first_error_index {
                        1
                    } else {
                        0
                    };
                labels.insert((sample.question.clone(), step.clone()), label);
            }
        }
        Self { template, labels }
    }

    fn lookup(&self, prompt: &str) -> Option<u8> {
        let question = extract_question(prompt, &self.template)?;
        let step = extract_current_step(prompt, &self.template)?;
        self.labels.get(&(question, step)).copied()
    }
}

#[derive(Debug, Clone)]
pub enum ScoreBehavior {
    /// Always the same pair of logits.
    Fixed { l_plus: f64, l_minus: f64 },
    /// Deterministic pseudo-random logits derived from (seed, prompt).
    Seeded { seed: u64 },
    /// Answer with the ground-truth label recovered from the prompt.
    Oracle(OracleConfig),
    /// Oracle when `marker` appears in the prompt; otherwise claim every
    /// step is correct. Makes retrieval presence measurable.
    GatedOracle {
        oracle: OracleConfig,
        marker: String,
    },
    /// Protocol-violation mode: omit the negative token from the response.
    OmitNegative { l_plus: f64 },
}

#[derive(Debug, Deserialize)]
struct ScoreRequest {
    prompt: String,
    candidate_tokens: [String; 2],
}

#[derive(Debug, Serialize)]
struct ScoreResponse {
    logits: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct ErrorResponse {
    error: String,
}

fn seeded_logits(seed: u64, prompt: &str) -> (f64, f64) {
    let digest = Sha256::digest(format!("{seed}:{prompt}").as_bytes());
    let a = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
    let b = u64::from_le_bytes(digest[8..16].try_into().expect("8 bytes"));
    // Logits in [-3, 3).
    (
        a as f64 / u64::MAX as f64 * 6.0 - 3.0,
        b as f64 / u64::MAX as f64 * 6.0 - 3.0,
    )
}

fn label_logits(label: u8) -> (f64, f64) {
    if label == 1 {
        (ORACLE_LOGIT, -ORACLE_LOGIT)
    } else {
        (-ORACLE_LOGIT, ORACLE_LOGIT)
    }
}

async fn handle_score(
    State(behavior): State<Arc<ScoreBehavior>>,
    Json(request): Json<ScoreRequest>,
) -> Result<Json<ScoreResponse>, (StatusCode, Json<ErrorResponse>)> {
    let [positive, negative] = &request.candidate_tokens;
    let not_found = |what: String| (StatusCode::BAD_REQUEST, Json(ErrorResponse { error: what }));
    let mut logits = BTreeMap::new();
    match behavior.as_ref() {
        ScoreBehavior::Fixed { l_plus, l_minus } => {
            logits.insert(positive.clone(), *l_plus);
            logits.insert(negative.clone(), *l_minus);
        }
        ScoreBehavior::Seeded { seed } => {
            let (l_plus, l_minus) = seeded_logits(*seed, &request.prompt);
            logits.insert(positive.clone(), l_plus);
            logits.insert(negative.clone(), l_minus);
        }
        ScoreBehavior::Oracle(oracle) => {
            let label = oracle
                .lookup(&request.prompt)
                .ok_or_else(|| not_found("no oracle label for this prompt".to_string()))?;
            let (l_plus, l_minus) = label_logits(label);
            logits.insert(positive.clone(), l_plus);
            logits.insert(negative.clone(), l_minus);
        }
        ScoreBehavior::GatedOracle { oracle, marker } => {
            let (l_plus, l_minus) = if request.prompt.contains(marker) {
                let label = oracle
                    .lookup(&request.prompt)
                    .ok_or_else(|| not_found("no oracle label for this prompt".to_string()))?;
                label_logits(label)
            } else {
                label_logits(1)
            };
            logits.insert(positive.clone(), l_plus);
            logits.insert(negative.clone(), l_minus);
        }
        ScoreBehavior::OmitNegative { l_plus } => {
            logits.insert(positive.clone(), *l_plus);
        }
    }
    Ok(Json(ScoreResponse { logits }))
}

pub fn score_router(behavior: ScoreBehavior) -> Router {
    Router::new()
        .route("/score", post(handle_score))
        .with_state(Arc::new(behavior))
}

/// Bind and serve on an ephemeral (or given) port; returns the bound
/// address and the server task.
pub async fn spawn_score_stub(
    behavior: ScoreBehavior,
    port: u16,
) -> anyhow::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    let app = score_router(behavior);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            eprintln!("score stub exited: {e}");
        }
    });
    Ok((addr, handle))
}
