//! Spectral estimation with a filter bank and a scalar prior, solved by continuation in the prior.

pub mod cli;
pub mod config;
pub mod continuation;
pub mod error;
pub mod factorization;
pub mod io;
pub mod linalg;
pub mod matrixeq;
pub mod moment;
pub mod sampling;
pub mod statespace;

pub use error::{Error, Result};
pub use linalg::{Field, Mat};
