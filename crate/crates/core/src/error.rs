use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("unknown categorical token {token:?} for test {test_id}")]
    UnknownToken { test_id: usize, token: String },
    #[error("test id {test_id} outside [0, {num_tests})")]
    TestOutOfRange { test_id: usize, num_tests: usize },
    #[error("label {label} outside [0, {classes})")]
    InvalidLabel { label: usize, classes: usize },
    #[error("episode {0:?} has no label")]
    MissingLabel(String),
    #[error("rate {0} outside the allowed range")]
    InvalidRate(f64),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {required} items, found {found}")]
    TooFew { required: usize, found: usize },
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("non-finite loss in batch {batch} of epoch {epoch}")]
    NanLoss { epoch: usize, batch: usize },
    #[error("parameter block {param:?} became non-finite after batch {batch} of epoch {epoch}")]
    Diverged {
        epoch: usize,
        batch: usize,
        param: String,
    },
    #[error("non-finite gradient in parameter block {0:?}")]
    NanGradient(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
}
