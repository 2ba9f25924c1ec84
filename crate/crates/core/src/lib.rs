pub mod cli;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod training;

pub use error::{Error, Result};
