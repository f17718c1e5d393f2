//! Multi-population mean-field Nash equilibria for an SIR epidemic game in
//! which each agent chooses a socialization level and a vaccination rate.
//!
//! The equilibrium is characterized by a forward (density) / backward (value)
//! ODE system. [`solver::fixed_point_solve`] discretizes it with explicit
//! Euler steps and iterates to a fixed point; [`analysis`] extracts jump
//! times and epidemic metrics; [`oracle`] holds independent checks (closed
//! forms and a Monte-Carlo agent simulator used to probe the Nash property).

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod oracle;
pub mod output;
pub mod solver;

pub use config::ModelConfig;
pub use error::{MfgError, Result};
pub use model::{GroupParams, HealthState, TimeGrid};
pub use solver::{fixed_point_solve, EquilibriumSolution, SolverSettings};
