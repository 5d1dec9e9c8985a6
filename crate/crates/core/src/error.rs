use std::fmt;

use thiserror::Error;

/// Byte range of a subexpression within its source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn join(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected {found}")]
    Unexpected { found: String },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("`{func}` takes {expected} argument(s), got {found}")]
    Arity {
        func: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed number `{0}`")]
    BadNumber(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {offset}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NegativeBasePower,
    ZeroToNegativePower,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DomainKind::DivisionByZero => "division by zero",
            DomainKind::LogNonPositive => "log of a non-positive number",
            DomainKind::SqrtNegative => "sqrt of a negative number",
            DomainKind::NegativeBasePower => "negative base with non-integer exponent",
            DomainKind::ZeroToNegativePower => "zero raised to a negative power",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {kind} in `{text}` (bytes {span})")]
    Domain { kind: DomainKind, span: Span, text: String },
    #[error("no value bound for variable `{0}`")]
    Unbound(String),
}

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("in {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {eigenvalue:e})")]
    MetricNotPositive { point: Vec<f64>, eigenvalue: f64 },
    #[error("singular matrix: smallest singular value {smallest:e} (largest {largest:e})")]
    Singular { smallest: f64, largest: f64 },
    #[error("frame is rank deficient at {point:?}: smallest singular value {smallest:e}")]
    RankDeficient { point: Vec<f64>, smallest: f64 },
    #[error("anchors differ: {0}")]
    AnchorMismatch(String),
    #[error("state became non-finite at t = {time}")]
    BlowUp {
        time: f64,
        partial: Box<crate::trajectory::Trajectory>,
    },
    #[error("singular snake configuration: smallest eigenvalue of the control operator {margin:e}{}", at_time.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    SingularConfiguration { margin: f64, at_time: Option<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
