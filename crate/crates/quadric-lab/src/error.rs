//! Error type shared by every module, with the mapping onto process exit codes.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, LabError>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    /// A component of an archimedean vector vanished where a unit was required.
    #[error("zero component in slot {slot}")]
    ZeroSlot { slot: usize },
    /// A constructor received a parameter outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The column norm required by the KAU decomposition is below one.
    #[error("column norm {norm} is below 1")]
    PreconditionNorm { norm: f64 },
    /// A value lies outside the range where the object is defined.
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// An enumeration would visit more points than the configured budget.
    #[error("enumeration budget exceeded: {needed} > {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },
    /// The quadratic form has zero determinant.
    #[error("degenerate quadratic form (zero determinant)")]
    DegenerateForm,
    /// A point does not lie on the quadric `q(x) = m`.
    #[error("point {0:?} is not on the quadric")]
    NotOnQuadric([i64; 3]),
    /// The plateau closure during orbit reduction grew past its budget.
    #[error("plateau closure exceeded {0} points")]
    PlateauBudget(usize),
    /// A least-squares design matrix is too badly conditioned.
    #[error("ill-conditioned fit (condition number {0:e})")]
    IllConditioned(f64),
    /// Adaptive quadrature failed to converge.
    #[error("quadrature did not converge: {0}")]
    QuadratureDiverged(String),
    /// The extrapolated tail of a zeta integral is too uncertain.
    #[error("tail estimate {tail:e} exceeds tolerance {tol:e}")]
    TailTooLarge { tail: f64, tol: f64 },
    /// Modular reduction did not terminate.
    #[error("reduction exceeded {0} iterations")]
    MaxIterations(usize),
    /// Orbit integral support detection failed.
    #[error("orbit support could not be located: {0}")]
    TruncationUnsafe(String),
    /// A compactified coordinate violates its defining constraint.
    #[error("inconsistent compactified coordinate (defect {0:e})")]
    CoordInconsistent(f64),
    /// The fitted power law near zero does not decay.
    #[error("improper integral converges too slowly (fitted exponent {0})")]
    SlowConvergence(f64),
    /// The Eisenstein index pair (0, 0) was supplied.
    #[error("the pair (0, 0) is not admissible")]
    ZeroPair,
    /// The lattice-sum tail is larger than the tolerance.
    #[error("cutoff too small: tail {tail:e} exceeds tolerance {tol:e}")]
    CutoffTooSmall { tail: f64, tol: f64 },
    /// An L-value needed for class inversion is numerically zero.
    #[error("L-value of character {0} is numerically zero")]
    SingularL(usize),
    /// The requested combination is not implemented for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Configuration error naming the offending key.
    #[error("invalid config key `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },
    /// I/O failure while reading inputs or writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl LabError {
    /// Process exit code: 2 configuration, 3 budget, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::ConfigInvalid { .. } | LabError::Io(_) | LabError::InvalidParameter(_) => 2,
            LabError::BudgetExceeded { .. }
            | LabError::PlateauBudget(_)
            | LabError::MaxIterations(_)
            | LabError::TruncationUnsafe(_) => 3,
            _ => 4,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_cover_the_three_classes() {
        let cfg = LabError::ConfigInvalid { key: "T".into(), reason: "missing".into() };
        assert_eq!(cfg.exit_code(), 2);
        assert_eq!(LabError::BudgetExceeded { needed: 2.0, budget: 1.0 }.exit_code(), 3);
        assert_eq!(LabError::SlowConvergence(-0.1).exit_code(), 4);
    }
}
