//! Command errors, split by exit code: validation problems exit 1,
//! provider failures exit 2.

use thiserror::Error;

use rprm_core::embedding::EmbeddingError;
use rprm_core::retrieval::RetrievalError;
use rprm_core::scoring::ScoringError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("provider failure: {0}")]
    Provider(String),
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self::Validation(message.into())
    }

    pub fn provider(message: impl Into<String>) -> Self {
        Self::Provider(message.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 1,
            Self::Provider(_) => 2,
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match &e {
            EmbeddingError::ProviderUnreachable(_)
            | EmbeddingError::CountMismatch { .. }
            | EmbeddingError::ZeroVector { .. }
            | EmbeddingError::NonFinite { .. }
            | EmbeddingError::MissingPrecomputed { .. } => Self::Provider(e.to_string()),
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embedding(inner) => inner.into(),
            other => Self::Validation(other.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match &e {
            ScoringError::ProviderUnreachable(_)
            | ScoringError::MalformedResponse(_)
            | ScoringError::CandidateTokenAbsent { .. }
            | ScoringError::NonFiniteLogit => Self::Provider(e.to_string()),
            // Prompt builds run retrieval, whose failures are provider
            // failures when the embedding service is at fault.
            ScoringError::PromptBuild { message, .. }
                if message.contains("unreachable") || message.contains("provider") =>
            {
                Self::Provider(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<rprm_core::corpus::CorpusError> for CliError {
    fn from(e: rprm_core::corpus::CorpusError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<rprm_core::prompting::PromptError> for CliError {
    fn from(e: rprm_core::prompting::PromptError) -> Self {
        Self::Validation(e.to_string())
    }
}

impl From<rprm_core::evaluation::EvalError> for CliError {
    fn from(e: rprm_core::evaluation::EvalError) -> Self {
        Self::Validation(e.to_string())
    }
}
