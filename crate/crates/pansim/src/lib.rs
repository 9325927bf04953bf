pub mod artifacts;
pub mod config;
pub mod error;
pub mod exec;
pub mod export;
pub mod ingest;
pub mod service;
pub mod workflow;

pub use error::{Error, Result};
