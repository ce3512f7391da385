use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: undeclared predicate `{name}`")]
    UndeclaredPredicate { name: String, line: usize },

    #[error("line {line}: predicate `{predicate}` expects {expected} argument(s), found {found}")]
    ArityMismatch {
        predicate: String,
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("line {line}: variable `{variable}` used with domains `{first}` and `{second}`")]
    TypeConflict {
        variable: String,
        first: String,
        second: String,
        line: usize,
    },

    #[error("line {line}: predicate `{name}` declared twice")]
    DuplicateDeclaration { name: String, line: usize },

    #[error("line {line}: evidence atom `{atom}` is not ground")]
    NonGroundAtom { atom: String, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("grounding `{formula}` needs {required} clauses, over the cap of {cap}")]
    GroundingCap {
        formula: String,
        required: u128,
        cap: usize,
    },

    #[error("exact inference over {free} connected free atoms exceeds the limit of {limit}")]
    TooManyFreeAtoms { free: usize, limit: usize },

    #[error("no ground clauses to learn from")]
    EmptyGrounding,

    #[error("objective is not finite at the starting point (step size {step})")]
    NonFiniteObjective { step: f64 },

    #[error("cannot merge triplets of different formulas: `{old}` vs `{new}`")]
    FormulaMismatch { old: String, new: String },

    #[error("category {src} domains are not a subset of category {target}")]
    NotSubset { src: usize, target: usize },

    #[error("unknown knowledge category {0}")]
    UnknownCategory(usize),

    #[error("structure learning is not supported; all incoming information is already known")]
    StructureLearningUnsupported,

    #[error("structure learner failed: {0}")]
    StructureLearner(String),

    #[error("incoming knowledge is empty")]
    EmptyIncoming,

    #[error("AUC requires both positive and negative labels")]
    SingleClass,

    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),

    #[error("knowledge list version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("corrupt knowledge list: {0}")]
    Corrupt(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Resource-limit errors, as opposed to malformed input.
    pub fn is_resource_limit(&self) -> bool {
        matches!(self, Error::GroundingCap { .. } | Error::TooManyFreeAtoms { .. })
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Syntax { .. }
                | Error::UndeclaredPredicate { .. }
                | Error::ArityMismatch { .. }
                | Error::TypeConflict { .. }
                | Error::DuplicateDeclaration { .. }
                | Error::NonGroundAtom { .. }
                | Error::Invalid(_)
                | Error::FormulaMismatch { .. }
                | Error::NotSubset { .. }
                | Error::UnknownCategory(_)
                | Error::EmptyIncoming
                | Error::SingleClass
                | Error::LengthMismatch(..)
                | Error::Version { .. }
                | Error::Corrupt(_)
                | Error::Json(_)
        )
    }
}
