//! Reconstruction of initial scalar-field measurements on chain and grid robot
//! networks running first-order consensus, plus the observability and noise
//! robustness metrics that compare the two topologies.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below fix the usual double-precision instantiation.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod field;
pub mod graph;
pub mod linalg;
pub mod observability;
pub mod robustness;
pub mod scalar;

pub use dynamics::{NetworkSystem, Noise, StateVector, Trajectory};
pub use error::{Error, Result};
pub use estimator::{estimate, EstimationConfig, EstimationResult, StepRule};
pub use field::{ErrorMap, ScalarField};
pub use graph::{Graph, SpectralData, Topology};
pub use observability::TraceBounds;
pub use robustness::EnergyReport;
pub use scalar::Real;

pub type NetworkSystemF64 = NetworkSystem<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type SpectralDataF64 = SpectralData<f64>;
pub type ScalarFieldF64 = ScalarField<f64>;
pub type EstimationConfigF64 = EstimationConfig<f64>;
pub type EstimationResultF64 = EstimationResult<f64>;
pub type TraceBoundsF64 = TraceBounds<f64>;
pub type EnergyReportF64 = EnergyReport<f64>;

pub type NetworkSystemF32 = NetworkSystem<f32>;
pub type TrajectoryF32 = Trajectory<f32>;
pub type SpectralDataF32 = SpectralData<f32>;
pub type ScalarFieldF32 = ScalarField<f32>;

/// Tool version recorded in every output directory.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
