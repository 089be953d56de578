//! `rprm build-dataset`: expand the labeled train corpus into per-step
//! samples, attach two-stage retrieval context to each, and write the
//! training records plus a retrieval audit file.

use rprm_core::corpus::enumerate_step_samples;
use rprm_core::pipeline::PromptPipeline;
use rprm_core::prompting::{assemble_input, render_training_record, TrainingMeta, TRAIN_SCHEMA};
use rprm_core::retrieval::{RetrievalContext, TargetQuestion};

use crate::config::RunConfig;
use crate::{artifacts, CliError};

const AUDIT_SCHEMA: &str = "rprm-audit/1";

pub async fn run(config: &RunConfig) -> Result<(), CliError> {
    let train_store = super::load_train_store(config)?;
    let template = super::load_template(config)?;
    let samples = enumerate_step_samples(&train_store)?;
    if samples.is_empty() {
        return Err(CliError::validation(
            "train corpus produced no step samples",
        ));
    }
    let out = &config.output_dir;
    let hash = config.snapshot_hash();
    let retrieval_enabled = !config.retrieval.is_disabled();

    let mut train_lines = vec![artifacts::header_line(TRAIN_SCHEMA, &hash)];
    let mut audit_lines = vec![artifacts::header_line(AUDIT_SCHEMA, &hash)];
    let mut with_references = 0usize;
    let mut reference_total = 0usize;
    let mut self_references = 0usize;

    if retrieval_enabled {
        let assets = super::load_retrieval_assets(config)?;
        let pipeline = PromptPipeline {
            ctx: RetrievalContext {
                question_index: &assets.question_index,
                question_model: &assets.question_model,
                step_model: &assets.step_model,
                store: &assets.store,
                embedder: &assets.embedder,
            },
            cfg: config.retrieval.clone(),
            template: template.clone(),
        };

        let mut current: Option<(String, rprm_core::pipeline::TwoStagePromptBuilder)> = None;
        for sample in &samples {
            if current
                .as_ref()
                .is_none_or(|(qid, _)| qid != &sample.question_id)
            {
                let question = train_store
                    .question(&sample.question_id)
                    .expect("sample question in train store");
                let builder = pipeline
                    .builder_for(TargetQuestion {
                        text: question.text.clone(),
                        id: Some(question.id.clone()),
                    })
                    .await?;
                current = Some((sample.question_id.clone(), builder));
            }
            let (_, builder) = current.as_ref().expect("builder just set");
            let question_text = &train_store
                .question(&sample.question_id)
                .expect("sample question in train store")
                .text;

            let retrieval = builder
                .retrieval_for(&sample.target_step)
                .await
                .map_err(CliError::from)?;
            let n_refs = retrieval.reference_questions.len() + retrieval.reference_steps.len();
            if n_refs > 0 {
                with_references += 1;
                reference_total += n_refs;
            }
            self_references += retrieval
                .reference_questions
                .iter()
                .filter(|h| h.question_id == sample.question_id)
                .count();
            self_references += retrieval
                .reference_steps
                .iter()
                .filter(|h| h.question_id == sample.question_id)
                .count();

            let bundle = assemble_input(
                question_text,
                &sample.prior_steps,
                &sample.target_step,
                &retrieval,
                &template,
            )?;
            let record = render_training_record(
                &template,
                &bundle,
                sample.label,
                TrainingMeta {
                    question_id: sample.question_id.clone(),
                    solution_id: sample.solution_id.clone(),
                    step_index: sample.step_index,
                    template_version: template.version.clone(),
                },
            )?;
            train_lines.push(record.to_json_line());
            audit_lines.push(retrieval.to_audit_json(&format!(
                "{}#{}#{}",
                sample.question_id, sample.solution_id, sample.step_index
            )));
        }
    } else {
        let empty = rprm_core::retrieval::RetrievalBundle::empty(config.retrieval.clone());
        for sample in &samples {
            let question_text = &train_store
                .question(&sample.question_id)
                .expect("sample question in train store")
                .text;
            let bundle = assemble_input(
                question_text,
                &sample.prior_steps,
                &sample.target_step,
                &empty,
                &template,
            )?;
            let record = render_training_record(
                &template,
                &bundle,
                sample.label,
                TrainingMeta {
                    question_id: sample.question_id.clone(),
                    solution_id: sample.solution_id.clone(),
                    step_index: sample.step_index,
                    template_version: template.version.clone(),
                },
            )?;
            train_lines.push(record.to_json_line());
            audit_lines.push(empty.to_audit_json(&format!(
                "{}#{}#{}",
                sample.question_id, sample.solution_id, sample.step_index
            )));
        }
    }

    artifacts::commit_all(vec![
        (
            artifacts::train_file(out),
            format!("{}\n", train_lines.join("\n")).into_bytes(),
        ),
        (
            artifacts::train_audit(out),
            format!("{}\n", audit_lines.join("\n")).into_bytes(),
        ),
    ])?;

    let avg_refs = if with_references == 0 {
        0.0
    } else {
        reference_total as f64 / with_references as f64
    };
    println!(
        "wrote {} training records ({} with references, {:.2} refs/record among those, {} self-references)",
        samples.len(),
        with_references,
        avg_refs,
        self_references,
    );
    if config.retrieval.exclude_self && self_references > 0 {
        return Err(CliError::validation(format!(
            "self-exclusion is on but {self_references} self-references were retrieved"
        )));
    }
    Ok(())
}
