use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("degenerate table: {0}")]
    Degenerate(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape { op, expected, got }
    }
}

pub(crate) fn check_len(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::shape(op, expected, got))
    }
}
