use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet needs at least 2 symbols, got {0}")]
    AlphabetTooSmall(usize),

    #[error("alphabet has more than 256 symbols ({0})")]
    AlphabetTooLarge(usize),

    #[error("duplicate symbol `{0}` in alphabet")]
    DuplicateSymbol(String),

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("letter index {index} out of range for alphabet of size {size}")]
    LetterOutOfRange { index: usize, size: usize },

    #[error("word is over a different alphabet than expected")]
    AlphabetMismatch,

    #[error("empty word")]
    EmptyWord,

    #[error("enumeration of {requested} items exceeds the cap of {cap}")]
    EnumerationTooLarge { requested: u128, cap: u64 },

    #[error("invalid amalgamation: {0}")]
    InvalidAmalgamation(String),

    #[error("amalgamation is not surjective: target symbol `{0}` has no preimage")]
    NotSurjective(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index sets differ")]
    IndexMismatch,

    #[error("entry {index} is not strictly positive ({value})")]
    NonPositiveEntry { index: usize, value: f64 },

    #[error("row {0} is identically zero (matrix is not row allowable)")]
    ZeroRow(usize),

    #[error("matrix is not primitive (no positive power up to the Wielandt bound {0})")]
    NotPrimitive(usize),

    #[error("tolerance {tol:e} not reached within {iterations} iterations (bound {bound:e})")]
    IterationCap { tol: f64, iterations: usize, bound: f64 },

    #[error("cannot certify: {0}")]
    Certification(String),

    #[error("requested tolerance {requested:e} is unreachable; best achievable is {achievable:e} at r = {r}")]
    Budget { requested: f64, achievable: f64, r: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
