//! Simulation and verification of online bisection with ring demands.
//!
//! Requests are edges of an `n`-node ring; an algorithm keeps a two-coloring
//! of the nodes, pays 1 whenever a requested edge joins two colors and pays 1
//! per recolored node. The crate provides:
//!
//! * [`ring`]: colorings, cut-edge sets, arcs and the partition edit distance;
//! * [`rebalance`]: sparsification of a balanced cut-edge set to `2k` edges;
//! * [`oracle`]: state-space enumeration and exact offline optima;
//! * [`shadow`]: the offline algorithm that follows an optimal trajectory
//!   with at most `2k` cut-edges, with its amortized bounds checked at runtime;
//! * [`online`]: work-function and multiplicative-weights solvers over the
//!   restricted state space;
//! * [`harness`]: request generators, experiment runner, trace output and
//!   the invariant verifier behind the `ringbisect` binary.

pub mod harness;
pub mod online;
pub mod oracle;
pub mod rebalance;
pub mod ring;
pub mod shadow;

pub use rebalance::{global_rebalance, RebalanceTrace};
pub use ring::{
    arc_between, arc_distance, coloring_of, cut_edges_of, phi, state_distance, Alpha, Arc, Color,
    Coloring, CutEdgeSet, Edge, Node, PhiSet, RingError, RingSize, StepKind,
};
