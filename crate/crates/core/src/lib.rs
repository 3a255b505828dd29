//! Behavioral simulator for GCN accelerator aggregation dataflows.
//!
//! The crate models a feature-slicing accelerator with a shared set-associative
//! cache and a bandwidth-limited memory, the online tile-morphing tuner that
//! picks vertex tilings between slices, closed-form traffic models, and a ring
//! all-gather multi-chip schedule.
//!
//! Matrix math is generic over [`Element`]; the simulator's native type is the
//! Q16.16 [`Fixed`], for which the aliases below are provided.

pub mod atm;
pub mod cache;
pub mod cost;
pub mod dataflow;
pub mod error;
pub mod graph;
pub mod matrix;
pub mod memory;
pub mod multichip;
pub mod oracle;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Element, Fixed};

pub type CsrGraph = graph::Csr<Fixed>;
pub type FeatureMatrix = matrix::Matrix<Fixed>;
pub type WeightMatrix = matrix::Matrix<Fixed>;

pub type CsrGraphF32 = graph::Csr<f32>;
pub type FeatureMatrixF32 = matrix::Matrix<f32>;
pub type CsrGraphF64 = graph::Csr<f64>;
pub type FeatureMatrixF64 = matrix::Matrix<f64>;
pub type MissRateFn = cost::MissRateFn<f64>;
pub type CostReport = cost::CostReport<f64>;
