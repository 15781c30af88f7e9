pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod sphere;

pub use error::{Error, Result};
