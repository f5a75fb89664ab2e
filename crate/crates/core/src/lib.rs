//! Design and evaluation of demand-response electricity tariffs for
//! price-responsive HVAC.
//!
//! The crate is organized around a pipeline:
//!
//! * [`thermal`] — room-temperature dynamics and the consumer/tariff domain types
//! * [`mpc`] — the consumer's model-predictive controller, solved exactly as a
//!   convex QP; the ground-truth oracle for everything downstream
//! * [`milp`] — a self-contained mixed-integer linear programming engine
//!   (bounded-variable simplex + best-first branch and bound)
//! * [`reformulate`] — turns the utility's bilevel pricing problem into a single
//!   MILP via KKT embedding, big-M complementarity and McCormick envelopes
//! * [`scenario`] — synthetic consumer populations
//! * [`evaluate`] — exact-oracle evaluation of tariffs against a population,
//!   report export, and a brute-force design oracle
//! * [`verify`] — cross-checking suites used by the `verify` CLI command

pub mod config;
pub mod evaluate;
pub mod milp;
pub mod mpc;
pub mod reformulate;
pub mod scenario;
pub mod thermal;
pub mod verify;

pub use thermal::{
    comfort_bounds, simulate_trajectory, step_temperature, total_energy, ConsumerType,
    GlobalConstants, PriceKind, PriceSignal, ThermalParams, TimeGrid,
};
