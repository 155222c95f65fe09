//! Approximate user-equilibrium traffic assignment with the k-paths
//! subtracting-adding heuristic, plus the measures used to grade it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod metrics;
pub mod network;
pub mod oracle;
pub mod shortest_path;
pub mod solver;
pub mod tntp;

pub use error::{Error, Result};
pub use metrics::{build_report, AssignmentReport, OdMetric};
pub use network::{DemandMatrix, Link, LinkState, Network};
pub use oracle::{frank_wolfe_solve, OracleResult};
pub use shortest_path::{extract_path, one_to_all, Path, ShortestPathTree};
pub use solver::{solve, OdPathSet, Phase, Solution, SolverConfig};
pub use tntp::{ParsedInstance, ReportFormat};
