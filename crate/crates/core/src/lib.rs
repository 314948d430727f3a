//! Analytical roofline performance model for vision-language-action inference.
//!
//! Workloads ([`workload`]) become operator graphs ([`opgraph`]) that are timed on
//! an accelerator ([`roofline`]) and combined with network legs ([`netmodel`]) into
//! deployment scenarios ([`scenarios`]).

pub mod cli;
pub mod config;
pub mod error;
pub mod netmodel;
pub mod opgraph;
pub mod reference;
pub mod report;
pub mod roofline;
pub mod scenarios;
pub mod workload;

pub use error::{Error, Result};
