//! Spectral density estimation for Gaussian processes observed at irregular
//! times, based on the sample variance of continuous wavelet coefficients.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod hrv;
pub mod inference;
pub mod io;
pub mod processes;
pub mod quad;
pub mod rng;
pub mod sampling;
pub mod wavelet;

pub use error::{Error, Result};
