//! Worst-case traversal time analysis for TSN switches with multi-level frame
//! preemption, preemption-class synthesis, priority assignment and a
//! byte-accurate simulator to check the bounds against.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod cpa;
pub mod error;
pub mod network;
pub mod priority;
pub mod sim;
pub mod synthesis;
pub mod time;
pub mod topology;
pub mod workload;

pub use error::{Error, Result};
