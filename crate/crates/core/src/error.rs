//! Error type shared by every module in the crate.

use std::fmt;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by tensor primitives, model construction, training,
/// file I/O and evaluation.
#[derive(Debug)]
pub enum Error {
    /// An operation received tensors whose shapes cannot be combined.
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    /// A convolution / resize was asked for an impossible geometry.
    InvalidGeometry { op: &'static str, detail: String },
    /// An operation produced a NaN or infinity.
    NonFinite { op: String },
    /// A reduction over an empty extent (e.g. batch norm over zero rows).
    EmptyInput { op: &'static str },
    /// A configuration value is out of its documented range.
    InvalidConfig { detail: String },
    /// A parameter name is already present in the store.
    DuplicateParam { name: String },
    /// A parameter name is missing from the store.
    MissingParam { name: String },
    /// A parameter name does not match any known labeling rule.
    UnlabeledParam { name: String },
    /// Stored tensor shapes do not match what the model config expects.
    CheckpointMismatch { detail: String },
    /// Token learning was asked to run against a teacher with trainable params.
    TeacherNotFrozen { name: String },
    /// A dataset id has no registered decoder head.
    UnknownDataset { id: String },
    /// Keypoint list length does not match the schema.
    KeypointArity {
        annotation_id: i64,
        expected: usize,
        got: usize,
    },
    /// Structured parse failure with a location hint.
    Parse { path: String, detail: String },
    /// Optimizer step aborted because a gradient was not finite.
    NonFiniteGradient { name: String },
    /// Training halted because the loss became NaN.
    NanLoss { step: usize },
    Io(std::io::Error),
    /// Malformed binary tensor / checkpoint file.
    Format { detail: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, expected, got } => {
                write!(f, "{op}: shape mismatch, expected {expected}, got {got}")
            }
            Error::InvalidGeometry { op, detail } => write!(f, "{op}: invalid geometry: {detail}"),
            Error::NonFinite { op } => write!(f, "{op}: produced a non-finite value"),
            Error::EmptyInput { op } => write!(f, "{op}: empty input"),
            Error::InvalidConfig { detail } => write!(f, "invalid config: {detail}"),
            Error::DuplicateParam { name } => write!(f, "duplicate parameter name: {name}"),
            Error::MissingParam { name } => write!(f, "missing parameter: {name}"),
            Error::UnlabeledParam { name } => {
                write!(f, "parameter name matches no labeling rule: {name}")
            }
            Error::CheckpointMismatch { detail } => {
                write!(f, "checkpoint/config mismatch: {detail}")
            }
            Error::TeacherNotFrozen { name } => {
                write!(f, "teacher parameter {name} is trainable; freeze it first")
            }
            Error::UnknownDataset { id } => write!(f, "unknown dataset id: {id}"),
            Error::KeypointArity {
                annotation_id,
                expected,
                got,
            } => write!(
                f,
                "annotation {annotation_id}: keypoints length {got}, schema wants {expected}"
            ),
            Error::Parse { path, detail } => write!(f, "parse error at {path}: {detail}"),
            Error::NonFiniteGradient { name } => {
                write!(f, "non-finite gradient for {name}; step aborted")
            }
            Error::NanLoss { step } => write!(f, "loss became NaN at step {step}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Format { detail } => write!(f, "format error: {detail}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
