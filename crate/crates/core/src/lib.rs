//! Release-and-recapture thermometry for atoms in optical tweezers.

pub mod cli;
pub mod error;
pub mod inference;
pub mod ingest;
pub mod physics;
pub mod protocols;
pub mod simulation;
pub mod service;
pub mod units;

pub use error::{Error, Result};
