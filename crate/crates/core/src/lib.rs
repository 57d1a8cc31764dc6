pub mod certificates;
pub mod cli;
pub mod diffcore;
pub mod environments;
pub mod error;
pub mod evaluation;
pub mod rng;
pub mod training;
pub mod verification;

pub use error::{Error, Result};
