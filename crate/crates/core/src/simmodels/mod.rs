//! Native simulators for the four model families.

pub mod boolean;
pub mod cascade;
pub mod network;
pub mod ode;
pub mod radiation;

pub use boolean::{classify_boolean, find_attractor, step_boolean, AttractorResult, BooleanNetwork};
pub use network::{generate_layered_dag, perturb_costs, solve_unit_flow, LayeredDag, PerturbScheme};
pub use ode::{first_crossing_time, integrate_ode, Crossing, OdeSystem, Trajectory};
pub use radiation::{classify_radiation, RadiationParams};
