//! Robust demand-response scheduling for clusters of fixed-frequency air
//! conditioners: stochastic baseline simulation, robust comfort
//! constraints, and per-unit mixed-integer scheduling.

pub mod baseline;
pub mod error;
pub mod lp;
pub mod markov;
pub mod milp;
pub mod report;
pub mod rng;
pub mod robust;
pub mod scenario;
pub mod solver;
pub mod thermal;
pub mod units;

pub use error::{Error, Result};
pub use scenario::{AcUnit, Forecast, Horizon, NormKind, OnOff, PriceSchedule, Scenario, TransitionParams};
