pub mod audio;
pub mod cascade;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod text;
pub mod training;

pub use error::{Error, Result};
