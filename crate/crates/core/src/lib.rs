//! Shrinkage estimation under non-Gaussian noise.
//!
//! The crate provides observation laws ([`noise_models`]), Stein kernels
//! ([`stein_kernels`]), multivariate zero-bias couplings ([`zero_bias`]),
//! shrinkage and soft-threshold estimators with their unbiased risk
//! estimates ([`estimation`]), and a Monte Carlo risk engine with analytic
//! bound calculators ([`risk_lab`]).

pub mod error;
pub mod estimation;
pub mod fields;
pub mod mat;
pub mod mc;
pub mod noise_models;
pub mod quadrature;
pub mod risk_lab;
pub mod special;
pub mod stats;
pub mod stein_kernels;
pub mod zero_bias;

pub use error::{Error, Result};
pub use mat::Mat;
pub use mc::RiskReport;
pub use noise_models::{NoiseModel, UnivariateLaw};
