//! Deterministic discrete diffusion load balancing on regular graphs.

pub mod balancers;
pub mod error;
pub mod fairness;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod spectral;

pub use balancers::{
    step, Balancer, BalancerKind, BalancerState, FlowTable, LoadVector, StepFlows,
};
pub use error::{Error, Result};
pub use graph::{augment, BalancingGraph, RegularGraph};
pub use spectral::{eigen_gap, transition_matrix, SpectralSummary, TransitionMatrix};
