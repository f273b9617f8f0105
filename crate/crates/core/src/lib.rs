pub mod analytic;
pub mod error;
pub mod geometry;
pub mod hilbert;
pub mod metrology;
pub mod models;
pub mod scaling;
pub mod sparse;
pub mod spectra;

pub use error::{Error, Result};
