//! Modal analysis of snapshot ensembles: POD reduction, exact and ensemble
//! DMD, spectral POD, and multivariate GP regression with a phase-aware
//! coregionalization kernel, plus synthetic benchmarks and comparison
//! metrics.

pub mod data;
pub mod dmd;
pub mod error;
pub mod experiment;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod modes;
pub mod mvgpr;
pub mod optim;
pub mod pod;
pub mod rng;
pub mod spline;
pub mod spod;
pub mod synth;

pub use error::{Error, Result};
