//! Simulation and exact analysis of the random walk on G_n(m), the group of
//! n×n upper unitriangular matrices over Z/mZ, driven by adding or
//! subtracting a random row to the row above it.

pub mod chain;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod modular;
pub mod observables;
pub mod projection;
pub mod report;
pub mod schedule;
pub mod spectral;

pub use chain::{ChainConfig, Event, EventLog, Trajectory, Variant};
pub use error::{Error, Result};
pub use modular::{ElementaryMatrix, ModMatrix, Residue, ResidueVector, Sign, UniUpperMatrix};
pub use projection::Projection;
pub use report::CheckReport;
pub use schedule::{schedule_eval, Constants, Schedule, ScheduleVariant};
