use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleErrorKind {
    Parse,
    Schema,
    Linearity,
    Type,
    Duplicate,
}

impl fmt::Display for RuleErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleErrorKind::Parse => "parse error",
            RuleErrorKind::Schema => "schema error",
            RuleErrorKind::Linearity => "linearity error",
            RuleErrorKind::Type => "type error",
            RuleErrorKind::Duplicate => "duplicate rule",
        })
    }
}

/// A rule-file error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {kind}: {message}")]
pub struct RuleError {
    pub kind: RuleErrorKind,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl RuleError {
    pub(crate) fn new(kind: RuleErrorKind, (line, col): (u32, u32), message: impl Into<String>) -> Self {
        RuleError {
            kind,
            line,
            col,
            message: message.into(),
        }
    }
}
