//! Batch auditing of notebook reproducibility for notebooks referenced from
//! scholarly articles.

pub mod analysis;
pub mod diff;
pub mod env;
pub mod error;
pub mod exec;
pub mod harvest;
pub mod inventory;
pub mod jats;
pub mod mock;
pub mod net;
pub mod pipeline;
pub mod proc;
pub mod store;

pub use error::{Error, Result};
