pub mod error;
pub mod experiments;
pub mod metric_core;
pub mod target_space;
pub mod immersions;
pub mod rigidity;
pub mod transport;

pub use error::{Error, Result};
