//! Step scoring: candidate-token logits from a provider, the two-way
//! softmax that turns them into a correctness probability, and first-error
//! localization over a solution.

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ALL_CORRECT;
use crate::prompting::RenderedPrompt;

pub const TRACE_SCHEMA: &str = "rprm-trace/1";

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("non-finite logit")]
    NonFiniteLogit,
    #[error("provider response is missing candidate token {token:?}")]
    CandidateTokenAbsent { token: String },
    #[error("scorer unreachable: {0}")]
    ProviderUnreachable(String),
    #[error("malformed scorer response: {0}")]
    MalformedResponse(String),
    #[error("no steps to score")]
    NoSteps,
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("prompt build failed for step {step_index}: {message}")]
    PromptBuild { step_index: usize, message: String },
    #[error("scorer tokens must be distinct")]
    EqualTokens,
    #[error("max in-flight requests must be at least 1")]
    ZeroInFlight,
}

/// How to reach the scoring model and which answer tokens to read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerProviderSpec {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_positive")]
    pub positive_token: String,
    #[serde(default = "default_negative")]
    pub negative_token: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_positive() -> String {
    "+".to_string()
}

fn default_negative() -> String {
    "-".to_string()
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

fn default_retries() -> u32 {
    3
}

impl ScorerProviderSpec {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.positive_token == self.negative_token {
            return Err(ScoringError::EqualTokens);
        }
        if self.max_in_flight == 0 {
            return Err(ScoringError::ZeroInFlight);
        }
        Ok(())
    }
}

/// Logits keyed by token text, as returned by the scorer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenLogits(pub BTreeMap<String, f64>);

impl TokenLogits {
    pub fn get(&self, token: &str) -> Option<f64> {
        self.0.get(token).copied()
    }
}

/// Correctness probability of one step: the two-way softmax over the
/// positive/negative token logits, computed in logistic form.
pub fn probability_from_logits(l_plus: f64, l_minus: f64) -> Result<f64, ScoringError> {
    if !l_plus.is_finite() || !l_minus.is_finite() {
        return Err(ScoringError::NonFiniteLogit);
    }
    let diff = l_plus - l_minus;
    // exp(l+)/(exp(l+)+exp(l-)) = 1/(1+exp(-(l+-l-))), branch keeps the
    // exponent non-positive so large logits cannot overflow.
    let p = if diff >= 0.0 {
        1.0 / (1.0 + (-diff).exp())
    } else {
        let e = diff.exp();
        e / (1.0 + e)
    };
    Ok(p)
}

/// One scored step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub probability: f64,
    pub logit_positive: f64,
    pub logit_negative: f64,
    /// 1-based step index j.
    pub step_index: usize,
    pub prompt_hash: String,
}

/// Predicted first wrong step for one sample: the smallest j whose score
/// falls below the threshold, or -1 when none does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstErrorPrediction {
    pub sample_id: String,
    pub predicted_index: i64,
    pub scores: Vec<StepScore>,
}

impl FirstErrorPrediction {
    /// Line-delimited trace record.
    pub fn to_trace_json(&self) -> String {
        serde_json::json!({
            "schema": TRACE_SCHEMA,
            "id": self.sample_id,
            "scores": self.scores.iter().map(|s| s.probability).collect::<Vec<_>>(),
            "prediction": self.predicted_index,
        })
        .to_string()
    }
}

/// Logit source for rendered prompts.
#[async_trait]
pub trait ScoreProvider: Send + Sync {
    async fn token_logits(
        &self,
        prompt: &str,
        candidates: (&str, &str),
    ) -> Result<TokenLogits, ScoringError>;
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    candidate_tokens: [&'a str; 2],
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    logits: BTreeMap<String, f64>,
}

/// Client for the `POST /score` protocol. Transport failures retry with
/// exponential backoff; malformed responses never retry.
pub struct HttpScoreProvider {
    client: reqwest::Client,
    endpoint: String,
    retries: u32,
    backoff_base: Duration,
}

impl HttpScoreProvider {
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Result<Self, ScoringError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScoringError::ProviderUnreachable(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: format!("{}/score", base_url.trim_end_matches('/')),
            retries: retries.max(1),
            backoff_base: Duration::from_millis(50),
        })
    }

    pub fn from_spec(spec: &ScorerProviderSpec) -> Result<Self, ScoringError> {
        spec.validate()?;
        Self::new(
            &spec.endpoint,
            Duration::from_millis(spec.timeout_ms),
            spec.retries,
        )
    }
}

#[async_trait]
impl ScoreProvider for HttpScoreProvider {
    async fn token_logits(
        &self,
        prompt: &str,
        candidates: (&str, &str),
    ) -> Result<TokenLogits, ScoringError> {
        let request = ScoreRequest {
            prompt,
            candidate_tokens: [candidates.0, candidates.1],
        };
        let mut last_transport_error = String::new();
        for attempt in 0..self.retries {
            if attempt > 0 {
                tokio::time::sleep(self.backoff_base * 2u32.pow(attempt - 1)).await;
            }
            let sent = self.client.post(&self.endpoint).json(&request).send().await;
            match sent {
                Err(e) => {
                    last_transport_error = e.to_string();
                    continue;
                }
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_transport_error = format!("{} returned {status}", self.endpoint);
                        continue;
                    }
                    if !status.is_success() {
                        return Err(ScoringError::MalformedResponse(format!(
                            "{} returned {status}",
                            self.endpoint
                        )));
                    }
                    let body: ScoreResponse = response
                        .json()
                        .await
                        .map_err(|e| ScoringError::MalformedResponse(e.to_string()))?;
                    return Ok(TokenLogits(body.logits));
                }
            }
        }
        Err(ScoringError::ProviderUnreachable(last_transport_error))
    }
}

/// Score one rendered prompt: fetch candidate-token logits at the answer
/// position and fold them through the two-way softmax.
pub async fn score_step(
    provider: &dyn ScoreProvider,
    tokens: (&str, &str),
    prompt: &RenderedPrompt,
    step_index: usize,
) -> Result<StepScore, ScoringError> {
    let logits = provider.token_logits(&prompt.text, tokens).await?;
    let l_plus = logits
        .get(tokens.0)
        .ok_or_else(|| ScoringError::CandidateTokenAbsent {
            token: tokens.0.to_string(),
        })?;
    let l_minus = logits
        .get(tokens.1)
        .ok_or_else(|| ScoringError::CandidateTokenAbsent {
            token: tokens.1.to_string(),
        })?;
    if !l_plus.is_finite() || !l_minus.is_finite() {
        return Err(ScoringError::NonFiniteLogit);
    }
    Ok(StepScore {
        probability: probability_from_logits(l_plus, l_minus)?,
        logit_positive: l_plus,
        logit_negative: l_minus,
        step_index,
        prompt_hash: prompt.content_hash.clone(),
    })
}

/// Builds the prompt for step j of a sample. The two-stage pipeline and the
/// plain baseline template both implement this.
#[async_trait]
pub trait StepPromptBuilder: Send + Sync {
    async fn build(
        &self,
        question: &str,
        prior_steps: &[String],
        target_step: &str,
    ) -> Result<RenderedPrompt, ScoringError>;
}

/// Threshold and stopping policy for [`locate_first_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocateOptions {
    pub theta: f64,
    /// Stop scoring after the first sub-threshold step instead of scoring
    /// every step. The prediction is the same either way.
    pub early_stop: bool,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self {
            theta: 0.5,
            early_stop: false,
        }
    }
}

/// Walk steps 1..n in order; for each j, prompt with prior steps 1..j-1
/// (assumed correct regardless of earlier scores) and score step j. The
/// prediction is the earliest j with score < theta, or -1.
pub async fn locate_first_error(
    provider: &dyn ScoreProvider,
    tokens: (&str, &str),
    builder: &dyn StepPromptBuilder,
    sample_id: &str,
    question: &str,
    steps: &[String],
    options: &LocateOptions,
) -> Result<FirstErrorPrediction, ScoringError> {
    if steps.is_empty() {
        return Err(ScoringError::NoSteps);
    }
    if !(options.theta > 0.0 && options.theta < 1.0) {
        return Err(ScoringError::BadThreshold(options.theta));
    }

    let mut scores = Vec::with_capacity(steps.len());
    for j in 1..=steps.len() {
        let prompt = builder
            .build(question, &steps[..j - 1], &steps[j - 1])
            .await?;
        let score = score_step(provider, tokens, &prompt, j).await?;
        let below = score.probability < options.theta;
        scores.push(score);
        if below && options.early_stop {
            break;
        }
    }

    let predicted_index = scores
        .iter()
        .find(|s| s.probability < options.theta)
        .map(|s| s.step_index as i64)
        .unwrap_or(ALL_CORRECT);

    Ok(FirstErrorPrediction {
        sample_id: sample_id.to_string(),
        predicted_index,
        scores,
    })
}
