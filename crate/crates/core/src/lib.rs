//! Toolkit for retrieval-augmented process reward models: a step-labeled
//! math corpus, two-stage retrieval (question-level, then step-level) over
//! PCA-reduced sentence embeddings, prompt assembly with reference
//! questions and steps, logit-based step scoring through a pluggable
//! provider, and a first-error evaluation harness.

pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
pub mod scoring;

pub use corpus::{
    enumerate_step_samples, load_corpus, load_eval_samples, to_eval_samples, CorpusError,
    CorpusStore, EvalSample, QuestionRecord, SolutionRecord, StepSample,
};
pub use embedding::{
    build_index, cosine_similarity, fit_pca, Embedder, EmbeddingError, EmbeddingProviderSpec,
    PcaModel, RawEmbedding, ReducedEmbedding, SimilarityIndex, Space,
};
pub use evaluation::{
    arith_acc, build_report, harmonic_f1, score_predictions, sweep_topk, EvalError, MetricsReport,
    SubsetAccuracies,
};
pub use pipeline::{BaselinePromptBuilder, PromptPipeline, TwoStagePromptBuilder};
pub use prompting::{
    assemble_input, render, render_training_record, PromptBundle, PromptError, PromptTemplate,
    RenderedPrompt, TrainingRecord,
};
pub use retrieval::{
    build_step_pool, retrieve_questions, retrieve_steps, two_stage_retrieve, QuestionHit,
    RetrievalBundle, RetrievalConfig, RetrievalContext, RetrievalError, StepHit, StepPool,
    TargetQuestion,
};
pub use scoring::{
    locate_first_error, probability_from_logits, score_step, FirstErrorPrediction,
    HttpScoreProvider, LocateOptions, ScoreProvider, ScorerProviderSpec, ScoringError, StepScore,
    TokenLogits,
};
