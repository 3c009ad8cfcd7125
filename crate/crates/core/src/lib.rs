//! Simulation-based analysis of long-term fairness in decision systems that
//! feed back into their environment.
//!
//! The crate covers the whole pipeline: parameter spaces and covering-array
//! sampling ([`config`]), the feedback-loop simulator with Monte-Carlo
//! stopping ([`sim`]), fairness and utility metrics ([`metrics`]), regression
//! based sensitivity analysis ([`sensitivity`]), Pareto trade-offs
//! ([`tradeoff`]), two case studies ([`cases`]) and file I/O ([`io`]).

pub mod cases;
pub mod config;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sensitivity;
pub mod sim;
pub mod tradeoff;
