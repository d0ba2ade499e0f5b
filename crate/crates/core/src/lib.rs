//! Sparse projection-posterior inference for Gaussian linear regression.
//!
//! Draws from the conjugate normal/inverse-gamma posterior are mapped through an
//! ℓ1-penalized projection onto sparse vectors. Credible regions are centred at
//! the LASSO and their credibility can be calibrated so that the limiting
//! frequentist coverage hits a requested target.

pub mod calibration;
pub mod error;
pub mod fit;
pub mod gram;
pub mod io;
pub mod limit;
pub mod normal;
pub mod posterior;
pub mod projection;
pub mod regions;
pub mod rng;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use gram::GramAccumulator;
pub use types::{
    validate_dataset, CredibleRegion, Dataset, FitConfig, Interval, Lambda, NormSelector, PosteriorDraw,
    PriorConfig, SparseDraw,
};

pub use nalgebra::{DMatrix, DVector};
