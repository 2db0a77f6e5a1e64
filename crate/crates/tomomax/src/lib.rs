//! Minimax tomography toolkit for two-level systems.
//!
//! The crate builds estimators for single-qubit and rebit Pauli tomography
//! under quantum relative-entropy loss, evaluates their exact pointwise /
//! Bayes / maximum risk, solves for least favorable priors (a deterministic
//! support-growing algorithm and a Monte Carlo one, each emitting a two-sided
//! certificate on the minimax risk), and exposes the classical noisy-coin
//! model together with the analytic lower-bound formulas it yields.
//!
//! Entropies are in nats throughout. Infinite risks are ordinary `f64`
//! infinities and flow through sums; they are results, not errors.

pub mod estimators;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod lfp;
pub mod model;
pub mod noisycoin;
pub mod numeric;
pub mod qstate;
pub mod risk;
pub(crate) mod vec3;

pub use experiment::{Axis, Dataset, DesignError, ExperimentDesign};
pub use qstate::{BlochState, Estimate, Kind, StateError, UnphysicalPoint};
