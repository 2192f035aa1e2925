//! Simulation and calibration of multivariate Hawkes processes with a fast
//! mean-field estimator.
//!
//! A model is a baseline vector `mu` and couplings `alpha^{ij}_q` on a fixed
//! basis of exponential kernels `g_q(t) = beta_q exp(-beta_q t)`. The crate
//! provides an exact sampler ([`simulation`]), one-pass auxiliary statistics
//! ([`aux_stats`]), the mean-field estimator with likelihood and contrast
//! baselines ([`estimators`]), and validity diagnostics ([`diagnostics`]).
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.
//!
//! ```
//! use hawkesmf::{estimators, simulation, Basis64, Params64};
//! use hawkesmf::params::make_block_matrix;
//!
//! let basis = Basis64::exponential(vec![1.0]).unwrap();
//! let alpha = make_block_matrix(4, 2, 0.3, 1, 0).unwrap();
//! let truth = Params64::new(vec![1.0; 4], alpha, basis.clone()).unwrap();
//! let events = simulation::simulate(&truth, 2000.0, 7).unwrap();
//! let (fit, _aux) = estimators::fit_mean_field_events(&events, &basis, &Default::default()).unwrap();
//! assert_eq!(fit.theta.rows(), 4);
//! ```

pub mod aux_stats;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod events;
pub mod kernels;
pub mod linalg;
pub mod params;
pub mod scalar;
pub mod simulation;

pub use aux_stats::{AuxStats, ZeroEventPolicy};
pub use error::{HawkesError, Result};
pub use estimators::{FitResult, Method};
pub use events::{EventMeta, EventSequence};
pub use kernels::{AIndex, ExpKernel, Kernel, KernelBasis};
pub use linalg::Mat;
pub use params::{AlphaTensor, HawkesParams};
pub use scalar::Scalar;

pub type Events64 = EventSequence<f64>;
pub type Params64 = HawkesParams<f64>;
pub type Alpha64 = AlphaTensor<f64>;
pub type Basis64 = KernelBasis<f64>;
pub type Aux64 = AuxStats<f64>;
pub type Fit64 = FitResult<f64>;
pub type Mat64 = Mat<f64>;

pub type Events32 = EventSequence<f32>;
pub type Params32 = HawkesParams<f32>;
pub type Alpha32 = AlphaTensor<f32>;
pub type Basis32 = KernelBasis<f32>;
pub type Aux32 = AuxStats<f32>;
pub type Fit32 = FitResult<f32>;
pub type Mat32 = Mat<f32>;
