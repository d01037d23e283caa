pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod knowledge;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
