pub mod audio;
pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub mod frontend;
pub mod upstream;
pub mod speaker;
pub mod metrics;
pub mod config;
pub mod extractor;
pub mod harness;
