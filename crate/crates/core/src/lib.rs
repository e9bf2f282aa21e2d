//! Consumption and investment with Hindy-Huang-Kreps preferences under
//! Knightian uncertainty: closed-form stationary solution, a binomial
//! g-expectation engine, path simulation of the tracking plan, and Monte
//! Carlo checks of the optimality conditions.

pub mod error;
pub mod gexp;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod scalar;
pub mod stationary;
pub mod tracking;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParams = model::ModelParams<f64>;
pub type ValidatedParams = model::ValidatedParams<f64>;
pub type DerivedConstants = model::DerivedConstants<f64>;
pub type ClosedFormSolution = stationary::ClosedFormSolution<f64>;
pub type AbstentionSolution = stationary::AbstentionSolution<f64>;
pub type TimeGrid = tracking::TimeGrid<f64>;
pub type GridPath = tracking::GridPath<f64>;
pub type Decay = tracking::Decay<f64>;
pub type Driver = gexp::Driver<f64>;
pub type Lattice = gexp::Lattice<f64>;
pub type LatticeSolution = gexp::LatticeSolution<f64>;
