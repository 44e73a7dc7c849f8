//! Command-line tools and the HTTP session service for superposed decoding.

pub mod backend;
pub mod cli;
pub mod error;
pub mod server;

pub use error::{AppError, Result};
