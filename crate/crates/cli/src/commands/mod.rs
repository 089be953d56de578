//! Command implementations. Each command reads the config, loads what it
//! needs, and writes its artifacts atomically.

pub mod build_dataset;
pub mod embed;
pub mod evaluate;
pub mod fit_pca;
pub mod index;
pub mod project_2d;
pub mod score;
pub mod sweep;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rprm_core::corpus::{load_corpus, CorpusStore};
use rprm_core::embedding::{Embedder, PcaModel, SimilarityIndex, Space};
use rprm_core::prompting::PromptTemplate;

use crate::config::RunConfig;
use crate::{artifacts, CliError};

/// Union of the configured pool corpora, deduplicated by path.
pub fn load_pool_store(config: &RunConfig) -> Result<CorpusStore, CliError> {
    let mut merged = CorpusStore::default();
    let mut seen: BTreeSet<PathBuf> = BTreeSet::new();
    for path in &config.corpus.pool {
        if !seen.insert(path.clone()) {
            continue;
        }
        let store = load_corpus(path, &config.corpus.default_dataset_tag)?;
        merged.merge(store)?;
    }
    Ok(merged)
}

pub fn load_train_store(config: &RunConfig) -> Result<CorpusStore, CliError> {
    let path = config
        .corpus
        .train
        .as_ref()
        .ok_or_else(|| CliError::validation("config has no corpus.train file"))?;
    Ok(load_corpus(path, &config.corpus.default_dataset_tag)?)
}

pub fn load_template(config: &RunConfig) -> Result<PromptTemplate, CliError> {
    match &config.template_path {
        Some(path) => Ok(PromptTemplate::load(path)?),
        None => Ok(PromptTemplate::default()),
    }
}

/// Fitted models, index, pool store, and embedder — what retrieval-backed
/// commands run against.
pub struct RetrievalAssets {
    pub store: CorpusStore,
    pub question_model: PcaModel,
    pub step_model: PcaModel,
    pub question_index: SimilarityIndex,
    pub embedder: Embedder,
}

pub fn load_retrieval_assets(config: &RunConfig) -> Result<RetrievalAssets, CliError> {
    let out = &config.output_dir;
    let store = load_pool_store(config)?;
    let question_model = PcaModel::load(&artifacts::pca_model(out, Space::Question))?;
    let step_model = PcaModel::load(&artifacts::pca_model(out, Space::Step))?;
    let question_index = SimilarityIndex::load(&artifacts::question_index(out))?;
    if question_index.model_fingerprint() != question_model.fingerprint() {
        return Err(CliError::validation(format!(
            "index at {} was built with a different question PCA model; rerun `rprm index`",
            artifacts::question_index(out).display()
        )));
    }
    let embedder = Embedder::from_spec(&config.embedding)?;
    Ok(RetrievalAssets {
        store,
        question_model,
        step_model,
        question_index,
        embedder,
    })
}

/// Step ids used in the step-vector artifact: `question#solution#index`.
pub fn step_vector_id(question_id: &str, solution_id: &str, step_index: usize) -> String {
    format!("{question_id}#{solution_id}#{step_index}")
}
