use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ordering violated: {0}")]
    OrderingViolation(String),

    /// The model is well defined but the optimisation problem is not: a plan
    /// with finite cost and infinite utility exists.
    #[error("ill-posed model: {inequality} fails ({lhs} <= {rhs})")]
    IllPosed {
        inequality: String,
        lhs: f64,
        rhs: f64,
    },

    #[error("{field} must be positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },

    #[error("{field} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("quadratic has no real root (discriminant {discriminant})")]
    NoRealRoot { discriminant: f64 },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("lattice too coarse: kappa * sqrt(dt) = {0} >= 1")]
    LatticeTooCoarse(f64),

    #[error("enumeration too large: {nodes} decision nodes (limit {limit})")]
    TooLarge { nodes: usize, limit: usize },

    #[error("kernel value {value} outside [{lo}, {hi}]")]
    KernelOutOfBounds { value: f64, lo: f64, hi: f64 },

    #[error("Lagrange constant must be positive, got {0}")]
    NonPositiveK(f64),

    #[error("consumption path decreases at node {0}")]
    NotMonotone(usize),

    #[error("horizon truncation tail bound {bound} is not below {target}")]
    TailTooLarge { bound: f64, target: f64 },

    #[error("parameter region for {0} is empty")]
    RegionEmpty(String),

    #[error("worst-case violation by kernel {kernel}: margin {margin}")]
    ViolationFound { kernel: String, margin: f64 },

    #[error("condition {which} violated at {location}: margin {margin}")]
    ConditionViolated {
        which: String,
        location: String,
        margin: f64,
    },

    #[error("operation requires the {expected} regime")]
    WrongRegime { expected: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
