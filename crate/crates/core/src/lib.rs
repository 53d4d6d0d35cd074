//! Training binary neural networks by message passing on a dense factor graph.
//!
//! Every training example becomes a factor that touches every binary weight of
//! the network. The crate provides exact and stochastic belief propagation,
//! binned survey propagation with stochastic (S4P) and FFT-based (S3P)
//! variable updates, and a driver that combines them (SNMP).
//!
//! Messages are stored in normalized p-form: a single probability that the
//! weight bit is 1. Surveys are histograms over a uniform grid of such
//! probabilities.

pub mod bp;
pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod graph;
pub mod grid;
pub mod messages;
pub mod model;
pub mod problem;
pub mod rng;
pub mod snmp;
pub mod sp;

pub use bp::{run_bp, BpMode, BpParams, BpRun, BpSolver, MessageUpdate, Schedule};
pub use error::{Error, Result};
pub use graph::{Adjacency, FactorGraph, TableGraph};
pub use grid::BinGrid;
pub use messages::{BpMessageStore, SurveyStore};
pub use model::{Architecture, Configuration, ConvLayer};
pub use problem::{Beta, Problem};
pub use rng::{EngineTag, Lineage, RngStream};
pub use snmp::{run_snmp, run_snmp_observed, EngineUsed, SnmpProgress, SolveResult, SolverState};
pub use sp::{run_sp, SpParams, SpRun, SpSolver, SpVariant};
