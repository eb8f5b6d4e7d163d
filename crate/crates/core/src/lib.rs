//! Reconstruction of heterogeneous Young's modulus and Poisson's ratio fields
//! from noisy 2-D displacement measurements.
//!
//! Three coordinate networks (displacement, strain, elasticity) are trained
//! against finite-difference plane-stress equilibrium residuals, then the
//! relative modulus is calibrated to absolute scale from the applied boundary
//! force. A plane-stress finite-element solver synthesizes test data.

pub mod calibrate;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod fem;
pub mod fields;
pub mod kernels;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod noise;
pub mod report;
pub mod train;

pub use dataset::{load_dataset, save_dataset, Dataset};
pub use error::{Error, Result};
pub use fields::{DisplacementField, ElasticityField, ScalarGrid, StrainField, StressField};
pub use kernels::{local_modulus_sum, pde_residual, strain_from_displacement, stress_from_strain, ResidualField};
pub use noise::add_noise;
