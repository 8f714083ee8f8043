//! Deterministic annealing for clustering and resource allocation with
//! per-cluster and per-type capacity constraints.
//!
//! Demand points with a probability distribution are assigned softly to
//! `K` resources through Gibbs associations. The free energy is minimized
//! at an increasing sequence of annealing parameters `β`; cluster weights
//! `η` are solved by a fixed point so that soft cluster masses hit the
//! prescribed capacities.
//!
//! ```
//! use capanneal_core::{anneal, AnnealConfig, CapacitySpec, Dataset};
//!
//! let ds = Dataset::from_scalars(&[0.0, 1.0, 10.0, 11.0], None).unwrap();
//! let report = anneal(&ds, 2, &CapacitySpec::None, &AnnealConfig::default()).unwrap();
//! assert!((report.distortion - 0.25).abs() < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
mod dual;
pub mod error;
pub mod gibbs;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod synthetic;

pub use baselines::{
    brute_force_capacitated, brute_force_unconstrained, fixed_eta_da, lloyd, random_init,
    LloydReport, OracleResult,
};
pub use error::{Error, Result};
pub use gibbs::{associations, free_energy, free_energy_gradient, masses, FreeEnergyValue, Masses};
pub use metrics::{conditional_entropy, distortion, modified_distortion, partition_cost};
pub use model::{
    squared_distance, AssocMatrix, CapacitySpec, ClusterState, Dataset, Eta, Partition,
    TypedAssoc,
};
pub use solver::{
    anneal, centroid_update, descent_step, eta_update, harden, inner_solve, perturb_resources,
    scale_instance, solve_eta, AnnealConfig, BetaInit, BetaMap, BetaMax, DescentStep, InnerOutcome,
    SolveReport, TrajectoryRecord,
};
