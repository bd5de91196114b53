//! Detection of "disconnector" edges between a reference (healthy) group graph
//! and a comparison (patient) group graph, plus the machinery needed to study
//! the method end to end on synthetic Gaussian data.
//!
//! The pipeline, bottom to top:
//!
//! * [`graph`] — undirected labeled graphs, connected components ("modules"),
//!   induced subgraphs and edge-set algebra.
//! * [`disconnector`] — the three-step modularity comparison that finds healthy
//!   modules splitting apart in the patient graph and the missing edges
//!   responsible, including indirect disconnections.
//! * [`synth`] — seeded stochastic block model graphs, planted disconnectivity,
//!   random partial-correlation models, Gaussian sampling and SNR-controlled
//!   noise injection.
//! * [`estimator`] — joint sparse precision estimation across groups (group
//!   graphical lasso via ADMM), partial correlations and significance-tested
//!   adjacency extraction.
//! * [`eval`] — precision/recall/F-measure scoring, precision-matrix MSE and
//!   the SNR sweep harness.
//! * [`config`] / [`io`] — declarative experiment configuration and the file
//!   formats shared with the command-line tool.
//!
//! All randomness is derived from a single master seed through named
//! sub-streams (see [`rng`]); identical inputs produce byte-identical outputs.

pub mod config;
pub mod disconnector;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod graph;
pub mod io;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Edge, LabeledGraph, Modality, ModulePartition, NodeId};
