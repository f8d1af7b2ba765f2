//! Dense linear algebra, fixed-step integration and a tiny exact QP solver.

mod matrix;
mod ode;
mod qp;

pub use matrix::{characteristic_polynomial, dot, linear_solve, norm2, Matrix, PIVOT_THRESHOLD};
pub use ode::{rk4_step, try_rk4_step};
pub use qp::{
    solve_qp, ActiveConstraint, LinearConstraint, QpProblem, QpSolution, DUAL_TOL, FEASIBILITY_TOL,
    MAX_ROWS, MAX_VARIABLES,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry")]
    NonFinite,
    #[error("singular matrix (pivot magnitude {pivot:e})")]
    SingularMatrix { pivot: f64 },
    #[error("vector field returned a non-finite value at t = {t}")]
    NonFiniteDerivative { t: f64 },
    #[error("integration step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("quadratic cost is not symmetric")]
    NotSymmetric,
    #[error("quadratic cost is not positive definite")]
    NotPositiveDefinite,
    #[error("problem has {variables} variables and {rows} rows; solver limit is 4 and 8")]
    ProblemTooLarge { variables: usize, rows: usize },
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("quadratic program is infeasible")]
    Infeasible,
}
