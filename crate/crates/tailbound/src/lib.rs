//! Simulation and numerical analysis of stationary tails of iterated random
//! Lipschitz maps.
//!
//! The crate provides:
//!
//! - `core_ifs`: the random-map abstraction, forward/backward iteration,
//!   contraction diagnostics and stationary sampling;
//! - `cramer`: the Cramér condition `E M^kappa = 1`, its root, and the
//!   implicit-renewal tail constants;
//! - `sandwich`: max-type/affine bounding maps whose own stationary tails
//!   bracket the chain's tail index, with pathwise verification;
//! - `fixed_points`: exact simulators for random affine recursions
//!   (perpetuities) and the thresholded max-type recursion;
//! - `models`: five worked example systems with closed-form sandwich
//!   coefficients;
//! - `tail_stats`: Hill / log-log tail estimation, exactness diagnostics and
//!   a two-sample Kolmogorov-Smirnov test;
//! - `cli`: the `tailbound` binary (config runner and report writer).
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod cli;
pub mod core_ifs;
pub mod cramer;
pub mod error;
pub mod fixed_points;
pub mod laws;
pub mod models;
pub mod numeric;
pub mod rng;
pub mod sandwich;
pub mod tail_stats;

pub use core_ifs::{MapFamily, SampleMode, SampleSet, Trajectory, ValueKind};
pub use cramer::{CramerSolution, FactorLaw, GoldieConstants, Nonarithmetic};
pub use error::{Error, Result};
pub use laws::ScalarLaw;
pub use sandwich::{IndexBracket, SandwichBounds, SandwichReport};
pub use tail_stats::{ExactnessReport, TailEstimate};
