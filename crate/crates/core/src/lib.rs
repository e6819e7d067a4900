//! Truncated Euler–Maruyama simulation of stochastic differential delay
//! equations `dx = f(x(t), x(t−δ(t)))dt + g(x(t), x(t−δ(t)))dB(t)` with
//! super-linearly growing coefficients and a time-varying delay.
//!
//! * [`model`]: problem definitions, delay functions, stability constants.
//! * [`truncation`]: the truncation map and truncated coefficients.
//! * [`brownian`]: reproducible Brownian increments keyed by seed and path id.
//! * [`solver`]: single paths and Monte Carlo ensembles.
//! * [`analysis`]: strong-order fits, decay-rate roots, moment decay.
//! * [`checks`]: numerical hypothesis checks.
//! * [`builtin`]: the bundled test problems.

pub mod analysis;
pub mod brownian;
pub mod builtin;
pub mod checks;
pub mod error;
pub mod model;
pub mod solver;
pub mod truncation;

pub use error::{Result, SddeError};
pub use model::{DelayFunction, InitialPath, SddeProblem, SplitSddeProblem, StabilityParams};
pub use solver::{run_ensemble, simulate, Mode, Scheme, SolverConfig};
pub use truncation::TruncationPolicy;
