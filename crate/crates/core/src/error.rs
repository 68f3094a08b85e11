use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage names attached to errors raised while fitting or sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scaling,
    Pca,
    Dmaps,
    Selection,
    Whitening,
    Density,
    Lift,
    Sampling,
    Persistence,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Scaling => "scaling",
            Stage::Pca => "pca",
            Stage::Dmaps => "dmaps",
            Stage::Selection => "selection",
            Stage::Whitening => "whitening",
            Stage::Density => "density",
            Stage::Lift => "lift",
            Stage::Sampling => "sampling",
            Stage::Persistence => "persistence",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature row {row} has zero range (min = max = {value})")]
    DegenerateFeature { row: usize, value: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("numerical blowup at step {step}: |entry| exceeded {limit:e}")]
    NumericalBlowup { step: usize, limit: f64 },

    #[error("insufficient kernel support at query point {index}")]
    InsufficientSupport { index: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error{}: {message}", location(*.line, *.column))]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("stage '{stage}': {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn parse(message: impl Into<String>) -> Self {
        Error::Parse {
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }

    /// Strips stage wrappers and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// The innermost pipeline stage recorded on this error, if any.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, source } => source.stage().or(Some(*stage)),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| match source {
            tagged @ Error::Stage { .. } => tagged,
            source => Error::Stage {
                stage,
                source: Box::new(source),
            },
        })
    }
}
