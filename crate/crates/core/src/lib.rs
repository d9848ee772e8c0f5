//! Nets of smooth functions, kernel operators and their exponentials.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod exponential;
pub mod functions;
pub mod genfunc;
pub mod jet;
pub mod kernel_ops;
pub mod mollifier;
pub mod quadrature;
pub mod random;
pub mod report;

pub use error::{Error, Result};
