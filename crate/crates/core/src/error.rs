use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("invalid frame interval [{start}, {end})")]
    InvalidInterval { start: usize, end: usize },
    #[error("frame index mismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: usize, found: usize },
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("tube entries must be non-empty and gap-free ({0})")]
    BrokenTube(String),
    #[error("cannot encode an empty descriptor set")]
    EmptyDescriptors,
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("region scorer failed: {0}")]
    Scorer(String),
    #[error("missing data: {0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
