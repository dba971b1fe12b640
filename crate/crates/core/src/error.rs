use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    SpecInvalid(String),

    #[error("invalid model config: {0}")]
    ConfigInvalid(String),

    #[error("person {0} is not in the knowledge base")]
    UnknownPerson(usize),

    #[error("render mode {mode} does not apply to a {family} knowledge base")]
    ModeMismatch { mode: String, family: String },

    #[error("paragraph of {len} tokens does not fit a {window}-token window")]
    ParagraphLongerThanWindow { len: usize, window: usize },

    #[error("junk stream ran dry after {0} paragraphs")]
    ExhaustedJunkStream(usize),

    #[error("model vocabulary has {model} entries, corpus vocabulary has {corpus}")]
    VocabMismatch { model: usize, corpus: usize },

    #[error("model output is not normalized: logsumexp = {0}")]
    NonNormalizedModel(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    DivergenceDetected { step: usize, loss: f64 },

    #[error("no result rows under {0}")]
    EmptyResults(PathBuf),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }
}
