//! Exact counting and exponential sums over finite semi-simple algebras.
//!
//! A finite semi-simple algebra over `F_q` decomposes as a product of matrix
//! algebras `M_{d_1}(F_{q^{n_1}}) x ... x M_{d_k}(F_{q^{n_k}})`. This crate
//! models such algebras at desk scale and evaluates the associated counting
//! functions (elements of given trace and norm) and Kloosterman-type
//! exponential sums, always by at least two routes: exhaustive enumeration
//! and character-sum closed forms. The [`verify`] module sweeps whole
//! parameter domains and reports every computed value against its bound.
//!
//! Module map:
//! - [`gf`]: prime-power finite fields, towers, discrete logs, irreducibles.
//! - [`chars`]: additive/multiplicative characters and Gauss sums.
//! - [`algebra`]: algebra specs, elements, enumeration, charpoly machinery.
//! - [`sums`]: the exponential sums (direct and closed-form routes).
//! - [`counts`]: the counting functions and exact reduction identities.
//! - [`verify`]: domain sweeps, bound checks, structured reports.

pub mod algebra;
pub mod chars;
pub mod counts;
pub mod gf;
mod ratio;
pub mod sums;
pub mod verify;

pub use ratio::Ratio;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("extension degree must be at least 1")]
    ZeroDegree,
    #[error("field size {size} exceeds the table cap {cap}; reduce parameters")]
    TableCapExceeded { size: u128, cap: u64 },
    #[error("{what} needs {needed} summands, cap is {cap}; reduce parameters or raise the cap")]
    CapExceeded {
        what: String,
        needed: u128,
        cap: u64,
    },
    #[error(
        "field mismatch: element of F_{{{have_p}^{have_k}}} used with F_{{{want_p}^{want_k}}}"
    )]
    FieldMismatch {
        have_p: u64,
        have_k: u32,
        want_p: u64,
        want_k: u32,
    },
    #[error("{0} is not a valid element code for this field")]
    InvalidElement(u64),
    #[error("discrete log of zero")]
    LogOfZero,
    #[error("zero has no inverse")]
    ZeroInverse,
    #[error("not a subfield: F_{{{0}^{1}}} does not embed in F_{{{2}^{3}}}")]
    NotASubfield(u64, u32, u64, u32),
    #[error("element does not lie in the embedded base field")]
    NotInSubfield,
    #[error("b = 0: use the norm-zero counting path")]
    NormTargetZero,
    #[error("element is not invertible")]
    NotInvertible,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix dimension {d} exceeds the desk cap {cap}")]
    MatrixCap { d: usize, cap: usize },
    #[error("algebra degree must be at least 2 (got n = {0})")]
    DegreeTooSmall(u32),
    #[error("empty factor list")]
    EmptyFactors,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical integrity failure: {0}")]
    Numerical(String),
    #[error("route disagreement: {0}")]
    RouteDisagreement(String),
    #[error("proven bound violated: {0}")]
    BoundViolated(String),
    #[error("arithmetic overflow: parameters too large")]
    Overflow,
}

pub type Result<T> = std::result::Result<T, Error>;
