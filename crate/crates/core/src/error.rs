use thiserror::Error;

use crate::model::ModelError;
use crate::rankexpr::ExprError;
use crate::template::TemplateError;
use crate::vocab::VocabError;
use crate::world::WorldError;

/// Top-level error for operations that cross module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("training error: {0}")]
    Train(String),
    #[error("judging error: {0}")]
    Judge(String),
    #[error("metrics error: {0}")]
    Metrics(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
