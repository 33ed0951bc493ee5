//! Files, model archives, reports and the `facelab` command line on top of
//! `facelab-core`.

pub mod archive;
pub mod cli;
pub mod error;
pub mod fsio;
pub mod policy;
pub mod report;

pub use error::{Error, Result};
