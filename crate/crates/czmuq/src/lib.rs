//! Rate-dependent cohesive zone modeling and calibration toolkit.
//!
//! The crate covers the full workflow for a thermally activated
//! elastic-viscoplastic cohesive interface with scalar damage:
//!
//! * [`czm`]: the traction-separation law and its explicit time integrator.
//! * [`dcb`]: a rigid-arm double cantilever beam surrogate that maps applied
//!   opening to reaction force by moment balance over the bonded interface.
//! * [`dist`]: truncated Gaussian and uniform priors.
//! * [`mcmc`]: affine-invariant ensemble sampler (stretch move).
//! * [`calibrate`]: Bayesian calibration target combining priors, forward
//!   model, and Gaussian likelihood, with an optional calibrated noise
//!   variance dimension.
//! * [`gp`]: ordinary-kriging Gaussian process used as an additive model
//!   discrepancy, with leave-one-out hyperparameter selection.
//! * [`uq`]: posterior propagation, variance composition, and predictive
//!   confidence bands.
//! * [`sobol`]: variance-based global sensitivity indices (Jansen
//!   estimators on a Saltelli design).
//! * [`synth`]: synthetic observation generator with known ground truth.
//! * [`tables`]: delimited text I/O for curves and observation sets.

pub mod calibrate;
pub mod czm;
pub mod dcb;
pub mod dist;
pub mod error;
pub mod gp;
pub mod mcmc;
pub mod sobol;
pub mod synth;
pub mod tables;
pub mod uq;

pub use error::{ConfigError, DataError, Error, NumericalError};
