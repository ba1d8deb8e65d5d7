//! Gibbs posteriors built from loss functions, credible regions computed from
//! posterior draws, and bootstrap calibration of the learning rate.
//!
//! The learning rate `η` in `π_n(θ) ∝ exp{−η n R_n(θ)} π(θ)` controls how
//! concentrated the posterior is. [`gpc::gpc_calibrate`] picks `η` so that a
//! chosen credible region attains its nominal frequentist coverage.

pub mod asymptotics;
pub mod data;
pub mod error;
pub mod gibbs;
pub mod gpc;
pub mod loss;
pub mod optim;
pub mod par;
pub mod regions;
pub mod sampler;
pub mod seed;
pub mod sim;
pub mod stats;

pub use data::{DataSet, Theta};
pub use error::{Error, Result};
pub use gibbs::{GibbsSpec, Prior};
pub use gpc::{estimate_coverage_boot, gpc_calibrate, CalibrationResult, GpcConfig, RegionKind};
pub use loss::{Basis, LossKind, LossModel};
pub use sampler::{sample_gibbs, PosteriorDraws, SamplerConfig};
