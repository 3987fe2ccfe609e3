//! Queuing networks whose servers swap positions with their neighbors.
//!
//! * [`graph`]: cycles, tori and general graphs with the exit/next-hop rule.
//! * [`sim`]: exact continuous-time simulation of the finite network and its
//!   N-replica mean-field version, plus the estimators built on it.
//! * [`transit`]: stationary transit rate through a tagged server.
//! * [`nlmp`]: the single-particle chain, the self-consistent rate profile of
//!   the mean-field limit on the line, and its two equilibria.
//! * [`metastability`]: lifetime of the apparently stable regime of finite
//!   mean-field networks and comparison with the low-load equilibrium.

pub mod graph;
pub mod metastability;
pub mod nlmp;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod transit;

pub use graph::{GraphKind, GraphTopology, Vertex};
