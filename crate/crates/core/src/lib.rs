pub mod discrimination;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod povm;
pub mod sampling;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
