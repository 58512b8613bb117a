use thiserror::Error;

use crate::priors::ProprietyReport;

/// Errors produced by the modelling, sampling and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error at record {index}: {message}")]
    Numeric { index: usize, message: String },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("ordering error: {0}")]
    Ordering(String),

    #[error("posterior propriety check failed: {0}")]
    Propriety(ProprietyReport),

    #[error("expected a {expected} model, found {found}")]
    ModelKind { expected: String, found: String },

    #[error(
        "truncated gamma sampler gave up after {attempts} rejections \
         (shape {shape}, rate {rate}, support ({lower}, {upper}))"
    )]
    TruncatedGamma {
        shape: f64,
        rate: f64,
        lower: f64,
        upper: f64,
        attempts: usize,
    },

    #[error("zero likelihood for subject {subject} at draw {draw}")]
    ZeroLikelihood { draw: usize, subject: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Numeric { .. } => "numeric",
            Error::Parse { .. } => "parse",
            Error::Ordering(_) => "ordering",
            Error::Propriety(_) => "propriety",
            Error::ModelKind { .. } => "model_kind",
            Error::TruncatedGamma { .. } => "truncated_gamma",
            Error::ZeroLikelihood { .. } => "zero_likelihood",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
