//! Recommendation policies pre-trained on preferences distilled from a
//! language-model judge, adapted online against simulated users.

pub mod agent;
pub mod data;
pub mod encoder;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod training;

pub use error::{Error, OracleError, Result};
