//! Wiring of retrieval, prompting, and scoring into per-sample prompt
//! builders.
//!
//! Question-level retrieval and the step pool depend only on the target
//! question, so they are computed once per sample; step-level retrieval
//! runs per target step, and reference steps are attached only to the step
//! being scored.

use async_trait::async_trait;

use crate::prompting::{assemble_input, render, PromptBundle, PromptTemplate, RenderedPrompt};
use crate::retrieval::{
    build_step_pool, retrieve_questions, retrieve_steps, QuestionRetrieval, RetrievalBundle,
    RetrievalConfig, RetrievalContext, RetrievalError, StepPool, TargetQuestion,
};
use crate::scoring::{ScoringError, StepPromptBuilder};

/// Template plus retrieval machinery, shared across samples.
pub struct PromptPipeline<'a> {
    pub ctx: RetrievalContext<'a>,
    pub cfg: RetrievalConfig,
    pub template: PromptTemplate,
}

impl<'a> PromptPipeline<'a> {
    /// Run stage one (and pool construction) for one target question,
    /// returning a builder that serves every step of that sample.
    pub async fn builder_for(
        &'a self,
        target: TargetQuestion,
    ) -> Result<TwoStagePromptBuilder<'a>, RetrievalError> {
        self.cfg.validate()?;
        let questions = if self.cfg.m > 0 {
            let query = self.ctx.reduce_question(&target.text).await?;
            retrieve_questions(
                self.ctx.question_index,
                self.ctx.store,
                &query,
                &target,
                &self.cfg,
            )?
        } else {
            QuestionRetrieval {
                top_k: Vec::new(),
                top_m: Vec::new(),
                pool_exhausted: false,
            }
        };
        let pool = if self.cfg.r > 0 {
            build_step_pool(&questions.top_m, self.ctx.step_model, self.ctx.embedder).await?
        } else {
            build_step_pool(&[], self.ctx.step_model, self.ctx.embedder).await?
        };
        Ok(TwoStagePromptBuilder {
            pipeline: self,
            target,
            questions,
            pool,
        })
    }
}

/// Prompt builder for one sample: stage one is frozen, stage two runs per
/// target step.
pub struct TwoStagePromptBuilder<'a> {
    pipeline: &'a PromptPipeline<'a>,
    target: TargetQuestion,
    questions: QuestionRetrieval,
    pool: StepPool,
}

impl TwoStagePromptBuilder<'_> {
    fn wrap<E: std::fmt::Display>(step_index: usize) -> impl Fn(E) -> ScoringError {
        move |e| ScoringError::PromptBuild {
            step_index,
            message: e.to_string(),
        }
    }

    /// The retrieval bundle for one target step: frozen reference questions
    /// plus freshly retrieved reference steps.
    pub async fn retrieval_for(
        &self,
        target_step: &str,
    ) -> Result<RetrievalBundle, RetrievalError> {
        let cfg = &self.pipeline.cfg;
        let reference_steps = if cfg.r > 0 && !self.pool.is_empty() {
            let query = self.pipeline.ctx.reduce_step(target_step).await?;
            let exclude = if cfg.exclude_self {
                self.target.id.as_deref()
            } else {
                None
            };
            retrieve_steps(&self.pool, &query, cfg.r, exclude)?
        } else {
            Vec::new()
        };
        Ok(RetrievalBundle {
            reference_questions: self.questions.top_k.clone(),
            reference_steps,
            config: cfg.clone(),
            pool_exhausted: self.questions.pool_exhausted,
        })
    }

    /// Assemble the ordered bundle for one step without rendering it.
    pub async fn assemble(
        &self,
        question: &str,
        prior_steps: &[String],
        target_step: &str,
    ) -> Result<PromptBundle, ScoringError> {
        let step_index = prior_steps.len() + 1;
        let retrieval = self
            .retrieval_for(target_step)
            .await
            .map_err(Self::wrap(step_index))?;
        assemble_input(
            question,
            prior_steps,
            target_step,
            &retrieval,
            &self.pipeline.template,
        )
        .map_err(Self::wrap(step_index))
    }
}

#[async_trait]
impl StepPromptBuilder for TwoStagePromptBuilder<'_> {
    async fn build(
        &self,
        question: &str,
        prior_steps: &[String],
        target_step: &str,
    ) -> Result<RenderedPrompt, ScoringError> {
        let step_index = prior_steps.len() + 1;
        let bundle = self.assemble(question, prior_steps, target_step).await?;
        render(&self.pipeline.template, &bundle).map_err(Self::wrap(step_index))
    }
}

/// Retrieval-free builder: the plain template with empty references.
pub struct BaselinePromptBuilder {
    pub template: PromptTemplate,
}

#[async_trait]
impl StepPromptBuilder for BaselinePromptBuilder {
    async fn build(
        &self,
        question: &str,
        prior_steps: &[String],
        target_step: &str,
    ) -> Result<RenderedPrompt, ScoringError> {
        let step_index = prior_steps.len() + 1;
        let wrap = |e: crate::prompting::PromptError| ScoringError::PromptBuild {
            step_index,
            message: e.to_string(),
        };
        let bundle = assemble_input(
            question,
            prior_steps,
            target_step,
            &RetrievalBundle::empty(RetrievalConfig {
                k: 0,
                m: 0,
                r: 0,
                ..RetrievalConfig::default()
            }),
            &self.template,
        )
        .map_err(wrap)?;
        render(&self.template, &bundle).map_err(wrap)
    }
}
