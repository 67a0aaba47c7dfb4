//! Simulation and analysis of best-response dynamics in Tullock contests
//! with convex costs.
//!
//! * [`contest`]: instances, utilities, best responses and the regret potential.
//! * [`dynamics`]: continuous, discrete, empirical-average and rate-scaled dynamics.
//! * [`equilibrium`]: closed forms, the ε-equilibrium check and the solver.
//! * [`analysis`]: cycle detection, periodic orbits, critical step search,
//!   rate fitting and Lyapunov audits.

pub mod analysis;
pub mod contest;
pub mod cost;
pub mod dynamics;
pub mod equilibrium;
pub mod error;

pub use contest::{ActionProfile, ContestInstance, InstanceBounds, Potential, Snapshot};
pub use cost::{CostFunction, CostTerm, Order};
pub use error::{Error, Result};
