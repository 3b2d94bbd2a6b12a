use std::fmt;

use serde::{Deserialize, Serialize};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error on `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("missing table `{0}`")]
    MissingTable(String),

    #[error("dangling reference in `{table}`: unknown token `{token}`")]
    DanglingToken { table: String, token: String },

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("scene graph structure error: {0}")]
    Structure(String),

    #[error("unbound placeholder `{0}`")]
    UnboundPlaceholder(String),

    #[error("question library error: {0}")]
    Library(String),

    #[error("window error: required [{required_from:.3}, {required_to:.3}] s, available [{available_from:.3}, {available_to:.3}] s")]
    Window {
        required_from: f64,
        required_to: f64,
        available_from: f64,
        available_to: f64,
    },

    #[error("derivation error: {0}")]
    Derivation(String),

    #[error("motion parse error: {0}")]
    MotionParse(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("endpoint returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("patch error: {0}")]
    Patch(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("serialization error: {0}")]
    Serialize(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Converts a serde_json error into a parse error carrying the byte offset
    /// into `input`.
    pub fn from_json(err: serde_json::Error, input: &[u8]) -> Self {
        Error::Parse {
            offset: byte_offset(input, err.line(), err.column()),
            message: err.to_string(),
        }
    }
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in input.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(input.len())
}

/// A non-fatal validation result: one violated invariant and where it lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub path: String,
    pub message: String,
}

impl Finding {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_points_into_second_line() {
        let input = b"{\n  \"a\": ?\n}";
        let err = serde_json::from_slice::<serde_json::Value>(input).unwrap_err();
        match Error::from_json(err, input) {
            Error::Parse { offset, .. } => assert_eq!(input[offset], b'?'),
            other => panic!("unexpected {other:?}"),
        }
    }
}
