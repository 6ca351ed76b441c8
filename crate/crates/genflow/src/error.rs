use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed arguments: bad axis bounds, wrong lengths, and so on.
    InvalidInput(String),
    /// Two objects that must live on one state space do not.
    SpaceMismatch,
    /// A value that must be strictly positive is not.
    Positivity { what: &'static str, index: usize, value: f64 },
    /// Total mass is unusable (zero, negative or off by more than the tolerance).
    Mass(f64),
    /// The stationary equation has a kernel of dimension > 1.
    NonErgodic { kernel_dim: usize },
    /// The kernel vector changes sign, so no probability density solves it.
    Infeasible,
    /// A structural invariant failed; names the invariant and the measured defect.
    Structural { invariant: &'static str, defect: f64, tol: f64 },
    /// An iterative method stopped at its cap.
    NotConverged { iterations: usize, best: f64 },
    /// A Legendre transform whose supremum is infinite.
    Unbounded { value: f64 },
    /// The inner objective of a Legendre transform is not concave.
    NonConvex { curvature: f64 },
    /// Explicit time step above the stability estimate.
    StepTooLarge { dt: f64, bound: f64 },
    /// Negative mass removed by clipping exceeded the budget.
    ClipBudget { clipped: f64, budget: f64 },
    /// exp of a field entry would overflow.
    Overflow { index: usize, value: f64 },
    /// Velocity reflection could not be represented on the grid.
    Snapping { error: f64, threshold: f64 },
    /// Singular or otherwise failed linear solve.
    Singular,
    /// Not enough data for a statistic.
    TooShort { have: usize, need: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(s) => write!(f, "invalid input: {s}"),
            Error::SpaceMismatch => write!(f, "operands live on different state spaces"),
            Error::Positivity { what, index, value } => {
                write!(f, "{what} must be strictly positive (entry {index} = {value:e})")
            }
            Error::Mass(m) => write!(f, "unusable total mass {m:e}"),
            Error::NonErgodic { kernel_dim } => {
                write!(f, "generator is not ergodic: stationary kernel has dimension {kernel_dim}")
            }
            Error::Infeasible => write!(f, "no positive stationary density exists"),
            Error::Structural { invariant, defect, tol } => {
                write!(f, "structural check `{invariant}` failed: defect {defect:e} > tol {tol:e}")
            }
            Error::NotConverged { iterations, best } => {
                write!(f, "no convergence after {iterations} iterations (best value {best:e})")
            }
            Error::Unbounded { value } => write!(f, "supremum is unbounded (reached {value:e})"),
            Error::NonConvex { curvature } => {
                write!(f, "objective is not convex along the search path (curvature {curvature:e})")
            }
            Error::StepTooLarge { dt, bound } => {
                write!(f, "time step {dt:e} exceeds the explicit stability bound {bound:e}")
            }
            Error::ClipBudget { clipped, budget } => {
                write!(f, "clipped mass {clipped:e} exceeds budget {budget:e}")
            }
            Error::Overflow { index, value } => {
                write!(f, "field entry {index} = {value:e} would overflow exp")
            }
            Error::Snapping { error, threshold } => {
                write!(f, "reflection snapping error {error:e} above threshold {threshold:e}")
            }
            Error::Singular => write!(f, "singular linear system"),
            Error::TooShort { have, need } => write!(f, "need at least {need} samples, have {have}"),
        }
    }
}

impl core::error::Error for Error {}
