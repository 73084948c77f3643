pub mod anneal;
pub mod cli;
pub mod cluster;
pub mod equilibrium;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod validation;
pub mod worldline;

pub use error::{Error, Result};

/// Version string embedded in every output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
