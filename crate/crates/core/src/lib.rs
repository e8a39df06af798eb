pub mod analysis;
pub mod error;
pub mod inference;
pub mod model;
pub mod numerics;
pub mod probe;
pub mod traceio;
pub mod trainer;
pub mod verify;

pub use error::{Result, SstError};
