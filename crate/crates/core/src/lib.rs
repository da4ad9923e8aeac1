//! Discrete simulation optimization over finite grids of categorical or
//! ordinal parameters, where each evaluation is a noisy simulation.
//!
//! Three solvers share one evaluation entry point ([`objective::ObjectiveHandle`]):
//!
//! * [`kn`]: fully sequential ranking and selection over every candidate,
//! * [`sr`]: the stochastic ruler, a neighborhood random search,
//! * [`ah`]: adaptive hyperbox random search.
//!
//! [`harness`] runs repeated trials of these and compares them with
//! two-sample t-tests from [`stats`].

pub mod ah;
pub mod error;
pub mod harness;
pub mod kn;
pub mod objective;
pub mod space;
pub mod sr;
pub mod stats;

pub use error::{Partial, SolveError};
pub use objective::{Bounds, ObjectiveError, ObjectiveHandle, SeedPolicy, Simulator};
pub use space::{Axis, Level, Neighborhood, SearchSpace, Solution};
