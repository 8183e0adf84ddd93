pub mod dgp;
pub mod engine;
mod error;
pub mod metrics;
pub mod normal;
pub mod ogm;
pub mod resampling;
pub mod scenario;

pub use error::{Error, Result};
