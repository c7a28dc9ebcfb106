pub mod cli;
pub mod data;
pub mod error;
pub mod fit;
pub mod oracle;
pub mod posterior;
pub mod predict;
pub mod priors;
pub mod sampler;
pub mod set;
pub mod simulate;

pub use error::{BvsError, Result};
pub use set::ActiveSet;
