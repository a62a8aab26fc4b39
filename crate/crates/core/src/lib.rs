#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arpl;
pub mod autoencoder;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod mmd;
pub mod protocol;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
