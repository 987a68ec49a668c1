//! Concept segmentation for co-evolving multivariate time series.
//!
//! A series is cut into sliding windows, encoded by a small MLP, and each
//! latent window is expressed as a linear combination of the others through
//! a learned coefficient matrix. A group-sparse penalty on consecutive column
//! differences of that matrix keeps neighbouring windows similar, so concept
//! transitions show up as peaks in the mean absolute column differences.
//!
//! Pipeline: [`ingest`] → [`train::fit`] → [`detect`] → [`metrics`].

pub mod cli;
pub mod detect;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod net;
pub mod selfexpr;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
