use crate::exact::Rational;

/// Errors raised by the constructions in this crate.
///
/// Finite-evidence outcomes (a probe that finds no gap, a strategy that stalls)
/// are reported through these variants rather than being silently guessed.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("separation violated: x is within {sep} of the dyadic/base-k point {point}")]
    SeparationViolated { point: Rational, sep: Rational },

    #[error("martingale is not exact")]
    NotExact,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("base mismatch: expected base {expected}, got {found}")]
    BaseMismatch { expected: u32, found: u32 },

    #[error("digit {digit} out of range for base {base}")]
    InvalidDigit { digit: u32, base: u32 },

    #[error("no atomlessness certificate (growth bound) supplied")]
    NoAtomlessnessCertificate,

    #[error("budget exceeded: needed {needed}, limit {limit}")]
    BudgetExceeded { needed: u128, limit: u128 },

    #[error("function cannot be evaluated at {0}")]
    DomainGap(Rational),

    #[error("Lipschitz bound violated between {a} and {b}")]
    LipschitzViolated { a: Rational, b: Rational },

    #[error("interval [{x}, {y}] outside the supported range")]
    RangeUnsupported { x: Rational, y: Rational },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("split budget exceeded at interval [{a}, {b}]")]
    SplitBudgetExceeded { a: Rational, b: Rational },

    #[error("tree depth exceeded; achieved increment bound {achieved}")]
    DepthExceeded { achieved: Rational },

    #[error("strategy stalled after {completed} completed cycles (depth {depth})")]
    Stalled { completed: usize, depth: usize },

    #[error("cover nesting violated: interval ({a}, {b}) at level {level} is not inside level {}", level - 1)]
    NestingViolated { level: usize, a: Rational, b: Rational },

    #[error("cover level {level} has measure {measure}, above 8^-{level}")]
    MeasureTooLarge { level: usize, measure: Rational },

    #[error("point is not in the cover at level {0}")]
    NotInCover(usize),

    #[error("precision unavailable: {0}")]
    PrecisionUnavailable(String),

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
