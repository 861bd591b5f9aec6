//! Monte Carlo laboratory for one-dimensional backward doubly stochastic
//! differential equations
//!
//! ```text
//! Y_t = ξ + ∫_t^T f(s, Y_s, Z_s) ds + ∫_t^T a(s) Y_s d←B_s − ∫_t^T Z_s dW_s
//! ```
//!
//! driven forward by `W` and backward by an independent `B`. The crate
//! simulates paired driver paths, solves the equation by per-`B`-path
//! least-squares regression, evaluates the explicit solution of linear
//! equations, and turns the comparison, flow and moment properties of the
//! solution map `x ↦ Y_t^{ξ(x)}` into statistical checks.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` / `f64`); the
//! aliases at the crate root fix `f64`.

// `!(a > b)` is deliberate throughout: NaN must fail every check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod drivers;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod linear;
pub mod lsmc;
pub mod regression;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod verify;

pub use error::{LabError, Result};
pub use rng::RngSpec;
pub use scalar::Scalar;

pub type TimeGrid = grid::TimeGrid<f64>;
pub type DriverPaths = drivers::DriverPaths<f64>;
pub type DriverSpec = coefficients::DriverSpec<f64>;
pub type NoiseLoadingSpec = coefficients::NoiseLoadingSpec<f64>;
pub type TerminalFamily = coefficients::TerminalFamily<f64>;
pub type ForwardSpec = coefficients::ForwardSpec<f64>;
pub type AssumptionCard = coefficients::AssumptionCard<f64>;
pub type Preset = coefficients::Preset<f64>;
pub type LinearBdsdeSpec = linear::LinearBdsdeSpec<f64>;
pub type ForwardPaths = forward::ForwardPaths<f64>;
pub type Problem = lsmc::Problem<f64>;
pub type SchemeConfig = lsmc::SchemeConfig<f64>;
pub type BackwardSolution = lsmc::BackwardSolution<f64>;
pub type FieldReport = field::FieldReport<f64>;
