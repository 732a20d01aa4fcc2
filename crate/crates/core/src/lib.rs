//! Signature-based spatial autoregressive regression for functional
//! covariates.

pub mod error;
pub mod data;
pub mod estimators;
pub mod experiment;
pub mod search;
pub mod selection;
pub mod simgen;
pub mod sigcore;
pub mod spatial;

pub use error::{Error, Result};
