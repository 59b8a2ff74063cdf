use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown task template `{0}`")]
    UnknownTemplate(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("expert script for `{template}` failed at step {step}: {reason}")]
    ExpertFailed {
        template: String,
        step: usize,
        reason: String,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("knowledge corruption not applicable: {0}")]
    Corruption(String),
    #[error("revision refused: {0}")]
    RevisionRefused(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Converts a serde_json error into a parse error carrying the byte offset.
    pub fn from_json(err: serde_json::Error, input: &[u8]) -> Self {
        let offset = byte_offset(input, err.line(), err.column());
        Error::Parse {
            offset,
            message: err.to_string(),
        }
    }
}

/// Converts a 1-based (line, column) pair into a byte offset.
fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    let mut current = 1;
    for (i, &b) in input.iter().enumerate() {
        if current == line {
            offset = i;
            break;
        }
        if b == b'\n' {
            current += 1;
            offset = i + 1;
        }
    }
    (offset + column.saturating_sub(1)).min(input.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_of_second_line() {
        let text = b"{\n  \"a\": ]\n}";
        let err = serde_json::from_slice::<serde_json::Value>(text).unwrap_err();
        match Error::from_json(err, text) {
            Error::Parse { offset, .. } => assert_eq!(text[offset], b']'),
            other => panic!("unexpected {other:?}"),
        }
    }
}
