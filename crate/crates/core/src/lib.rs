//! Cluster-based modeling of time-varying air-to-ground multipath
//! channels, from measured impulse responses to synthetic ones.

pub mod error;
pub mod estimator;
pub mod clustering;
pub mod mpc;
pub mod pipeline;
pub mod rng;
pub mod inter;
pub mod intra;
pub mod io;
pub mod stats;
pub mod synthesis;
pub mod tracking;

pub use error::{Error, Result};
