use thiserror::Error;

pub type Result<T> = std::result::Result<T, MathError>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular matrix")]
    SingularMatrix,
    #[error("degenerate element: {0}")]
    DegenerateElement(String),
    #[error("coefficient does not lie in the base field: {0}")]
    CoefficientNotRational(String),
    #[error("invariant polynomial is not irreducible of the required degree")]
    NotIrreducible,
    #[error("irreducibility could not be decided: {0}")]
    IrreducibilityUndecided(String),
    #[error("height mismatch: Height(tau) = {tau}, Height(phi) = {phi}")]
    HeightMismatch { tau: i64, phi: i64 },
    #[error("v(NRD(Delta)) = {got}, expected {expected}")]
    DeltaNormMismatch { got: i64, expected: i64 },
    #[error("intersection is infinite")]
    InfiniteIntersection,
    #[error("integrand vanishes on the support")]
    SingularOrbit,
    #[error("enumeration of {needed} items exceeds the budget of {budget}")]
    EnumerationTooLarge { needed: u128, budget: u64 },
    #[error("cell budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("irregular element: {0}")]
    IrregularElement(String),
    #[error("no integral representative: {0}")]
    NoIntegralRepresentative(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Coarse grouping used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The inputs violate a mathematical hypothesis.
    Math,
    /// Precision, enumeration or cell budgets ran out.
    Resource,
    /// Malformed or unsupported input.
    Input,
}

impl MathError {
    pub fn class(&self) -> ErrorClass {
        use MathError::*;
        match self {
            NotIrreducible | InfiniteIntersection | SingularOrbit | DegenerateElement(_)
            | HeightMismatch { .. } | DeltaNormMismatch { .. } | SingularMatrix
            | IrregularElement(_) | NoIntegralRepresentative(_) => ErrorClass::Math,
            PrecisionExhausted(_) | IrreducibilityUndecided(_) | EnumerationTooLarge { .. }
            | BudgetExceeded { .. } => ErrorClass::Resource,
            Domain(_) | CoefficientNotRational(_) | DimensionMismatch(_) => ErrorClass::Input,
        }
    }

    pub(crate) fn precision(what: impl Into<String>) -> Self {
        MathError::PrecisionExhausted(what.into())
    }
}
