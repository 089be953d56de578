//! `rprm score`: first-error localization over every configured eval file,
//! with per-dataset score-trace checkpoints.
//!
//! Samples are scored concurrently up to the scorer's in-flight limit;
//! traces are collected and written sorted by sample id, so completion
//! order never shows in the artifact. A dataset whose trace file already
//! matches the current config hash is resumed for free.

use std::collections::BTreeMap;

use futures::stream::{self, StreamExt, TryStreamExt};

use rprm_core::corpus::{load_eval_samples, EvalSample};
use rprm_core::pipeline::{BaselinePromptBuilder, PromptPipeline};
use rprm_core::retrieval::{RetrievalConfig, RetrievalContext, TargetQuestion};
use rprm_core::scoring::{
    locate_first_error, FirstErrorPrediction, HttpScoreProvider, LocateOptions, StepPromptBuilder,
    TRACE_SCHEMA,
};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

/// One dataset's scored outcome.
pub struct ScoreOutcome {
    pub dataset: String,
    pub samples: Vec<EvalSample>,
    pub predictions: Vec<FirstErrorPrediction>,
    pub resumed: usize,
    pub trace_path: std::path::PathBuf,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct TraceLine {
    id: String,
    scores: Vec<f64>,
    prediction: i64,
}

impl TraceLine {
    fn to_json(&self) -> String {
        serde_json::json!({
            "schema": TRACE_SCHEMA,
            "id": self.id,
            "scores": self.scores,
            "prediction": self.prediction,
        })
        .to_string()
    }
}

fn read_resumable_traces(path: &std::path::Path, config_hash: &str) -> BTreeMap<String, TraceLine> {
    let mut resumed = BTreeMap::new();
    let Ok(content) = std::fs::read_to_string(path) else {
        return resumed;
    };
    let mut lines = content.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return resumed;
    };
    let Ok(header_value) = serde_json::from_str::<serde_json::Value>(header) else {
        return resumed;
    };
    if header_value.get("config_hash").and_then(|v| v.as_str()) != Some(config_hash) {
        return resumed;
    }
    for line in lines {
        if let Ok(trace) = serde_json::from_str::<TraceLine>(line) {
            resumed.insert(trace.id.clone(), trace);
        }
    }
    resumed
}

async fn score_pending<'a>(
    config: &RunConfig,
    retrieval_cfg: &RetrievalConfig,
    template: &rprm_core::prompting::PromptTemplate,
    provider: &HttpScoreProvider,
    assets: Option<&'a super::RetrievalAssets>,
    pending: Vec<&EvalSample>,
) -> Result<Vec<FirstErrorPrediction>, CliError> {
    let tokens = (
        config.scorer.positive_token.as_str(),
        config.scorer.negative_token.as_str(),
    );
    let options = LocateOptions {
        theta: config.theta,
        early_stop: config.early_stop,
    };
    let in_flight = config.scorer.max_in_flight.max(1);

    match assets {
        Some(assets) => {
            let pipeline = PromptPipeline {
                ctx: RetrievalContext {
                    question_index: &assets.question_index,
                    question_model: &assets.question_model,
                    step_model: &assets.step_model,
                    store: &assets.store,
                    embedder: &assets.embedder,
                },
                cfg: retrieval_cfg.clone(),
                template: template.clone(),
            };
            let pipeline = &pipeline;
            stream::iter(pending.into_iter().map(|sample| async move {
                let builder = pipeline
                    .builder_for(TargetQuestion {
                        text: sample.question.clone(),
                        id: None,
                    })
                    .await
                    .map_err(|e| sample_error(&sample.id, CliError::from(e)))?;
                locate_first_error(
                    provider,
                    tokens,
                    &builder,
                    &sample.id,
                    &sample.question,
                    &sample.steps,
                    &options,
                )
                .await
                .map_err(|e| sample_error(&sample.id, CliError::from(e)))
            }))
            .buffer_unordered(in_flight)
            .try_collect()
            .await
        }
        None => {
            let builder = BaselinePromptBuilder {
                template: template.clone(),
            };
            let builder = &builder;
            stream::iter(pending.into_iter().map(|sample| async move {
                locate_first_error(
                    provider,
                    tokens,
                    builder as &dyn StepPromptBuilder,
                    &sample.id,
                    &sample.question,
                    &sample.steps,
                    &options,
                )
                .await
                .map_err(|e| sample_error(&sample.id, CliError::from(e)))
            }))
            .buffer_unordered(in_flight)
            .try_collect()
            .await
        }
    }
}

fn sample_error(sample_id: &str, error: CliError) -> CliError {
    match error {
        CliError::Provider(m) => CliError::Provider(format!("sample {sample_id:?}: {m}")),
        CliError::Validation(m) => CliError::Validation(format!("sample {sample_id:?}: {m}")),
    }
}

/// Score every configured eval dataset with the given retrieval config.
/// `k_suffix` namespaces trace files for sweep runs.
pub async fn run_scoring(
    config: &RunConfig,
    retrieval_cfg: &RetrievalConfig,
    k_suffix: Option<usize>,
) -> Result<Vec<ScoreOutcome>, CliError> {
    if config.corpus.eval.is_empty() {
        return Err(CliError::validation("config has no corpus.eval files"));
    }
    retrieval_cfg
        .validate()
        .map_err(|e| CliError::validation(e.to_string()))?;
    let template = super::load_template(config)?;
    let provider = HttpScoreProvider::from_spec(&config.scorer)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let hash = config.snapshot_hash();
    let out = &config.output_dir;

    let retrieval_enabled = retrieval_cfg.m > 0 || retrieval_cfg.r > 0;
    let assets = if retrieval_enabled {
        Some(super::load_retrieval_assets(config)?)
    } else {
        None
    };

    let mut outcomes = Vec::new();
    for (dataset, path) in &config.corpus.eval {
        let samples = load_eval_samples(path)?;
        let trace_path = artifacts::trace_file(out, dataset, k_suffix);
        let mut traces = read_resumable_traces(&trace_path, &hash);
        traces.retain(|id, _| samples.iter().any(|s| &s.id == id));
        let resumed = traces.len();

        let pending: Vec<&EvalSample> = samples
            .iter()
            .filter(|s| !traces.contains_key(&s.id))
            .collect();
        let fresh = score_pending(
            config,
            retrieval_cfg,
            &template,
            &provider,
            assets.as_ref(),
            pending,
        )
        .await?;
        for prediction in &fresh {
            traces.insert(
                prediction.sample_id.clone(),
                TraceLine {
                    id: prediction.sample_id.clone(),
                    scores: prediction.scores.iter().map(|s| s.probability).collect(),
                    prediction: prediction.predicted_index,
                },
            );
        }

        // Traces sorted by id; predictions aligned with that order.
        // TODO: checkpoint mid-dataset (every N samples) so a killed run
        // loses at most one batch instead of the whole dataset.
        let mut lines = vec![artifacts::header_line(TRACE_SCHEMA, &hash)];
        let mut predictions = Vec::with_capacity(samples.len());
        for (id, trace) in &traces {
            lines.push(trace.to_json());
            predictions.push(FirstErrorPrediction {
                sample_id: id.clone(),
                predicted_index: trace.prediction,
                scores: Vec::new(),
            });
        }
        artifacts::write_atomic(&trace_path, format!("{}\n", lines.join("\n")).as_bytes())?;

        outcomes.push(ScoreOutcome {
            dataset: dataset.clone(),
            samples,
            predictions,
            resumed,
            trace_path,
        });
    }
    Ok(outcomes)
}

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let outcomes = run_scoring(config, &config.retrieval, None).await?;
    for outcome in &outcomes {
        println!(
            "{}: scored {} samples ({} resumed) -> {}",
            outcome.dataset,
            outcome.samples.len(),
            outcome.resumed,
            outcome.trace_path.display(),
        );
    }
    Ok(())
}
