pub mod classifier;
pub mod error;
pub mod gan;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod pipeline;
pub mod query;
pub mod synthdata;
pub mod vae;

pub use error::{Error, ErrorKind, Result};
