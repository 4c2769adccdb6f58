pub mod datasets;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod init;
pub mod linalg;
pub mod model;
pub mod probes;

pub use error::{Error, Result};
