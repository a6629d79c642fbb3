//! Two-stage utility / data-center pricing.
//!
//! A utility sets per-location billing references under tiered pricing to
//! balance electric load across substations; a cloud provider responds by
//! redistributing workload (hence energy) across its data centers to
//! minimize cost. This crate models both stages, computes load-index bounds
//! (integrated and restricted benchmarks), solves the pricing stage exactly
//! by a big-M branch-and-bound over the response optimality conditions,
//! approximately by a descent on the references, and robustly against
//! bounded background-load forecast errors. Scenario files, a synthetic
//! generator, and the experiment runner live here too; the `dcdr` binary is
//! a thin wrapper.

pub mod benchmarks;
pub mod bilevel;
pub mod error;
pub mod heuristic;
pub mod model;
pub mod numerics;
pub mod robust;
pub mod runner;
pub mod scenario;
pub mod stage2;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use error::{Error, Result};
pub use model::{
    eli, energy_of, recover_dispatch, reduce_to_energy_space, total_cost, DataCenterSpec,
    Diagnostics, DispatchDecision, GridSpec, Method, PricingDecision, PricingPolicy, Scenario,
    SlotProblem, SolveReport,
};
