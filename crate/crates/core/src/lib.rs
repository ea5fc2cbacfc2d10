pub mod bounds;
pub mod data;
pub mod error;
pub mod fastsum;
pub mod grouping;
pub mod gsi;
pub mod kernel;
pub mod nufft;
pub mod par;
pub mod solver;

pub use error::{Error, Result};

/// Library version recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
