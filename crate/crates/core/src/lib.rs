pub mod bench;
pub mod cli;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod rng;
pub mod signal;
pub mod taxonomy;
pub mod traits;

pub use error::{Error, Result};
