//! Estimators: the mean-field solve and its perturbative approximation,
//! maximum likelihood, and the least-squares contrast function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernels::KernelBasis;
use crate::linalg::Mat;
use crate::params::{AlphaTensor, HawkesParams};
use crate::scalar::Scalar;

pub mod approx;
pub mod contrast;
pub mod likelihood;
pub mod mean_field;
pub mod mle;

pub use approx::{build_c0, build_j0, fit_mean_field_approx, ApproxOrder};
pub use contrast::{contrast_matrix, default_quad_step, fit_contrast, ContrastStats};
pub use likelihood::{neg_log_likelihood, nll_gradient, LikelihoodData};
pub use mean_field::{fit_mean_field, fit_mean_field_events, MfOptions};
pub use mle::{fit_mle, fit_mle_data, MleOptions};

/// Estimator tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "MF_APPROX")]
    MfApprox,
    #[serde(rename = "MLE")]
    Mle,
    #[serde(rename = "CF")]
    Cf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mf, Method::MfApprox, Method::Mle, Method::Cf];

    /// Lower-case command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::MfApprox => "mf_approx",
            Method::Mle => "mle",
            Method::Cf => "cf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HawkesError;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| HawkesError::InvalidParameter(format!("unknown method {s:?} (expected mf, mf_approx, mle or cf)")))
    }
}

/// Seconds spent per phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    /// Statistics / precomputation pass over the events.
    pub preprocess: f64,
    /// Linear solves or optimizer iterations.
    pub solve: f64,
}

impl WallTime {
    pub fn total(&self) -> f64 {
        self.preprocess + self.solve
    }
}

/// One point of an optimizer trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Seconds since the start of the fit, precomputation included.
    pub seconds: f64,
    pub nll: f64,
}

/// Output of every estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitResult<S: Scalar> {
    pub method: Method,
    /// `d x (d p + 1)`; row `i` is `theta^i = (mu^i, alpha^{i j}_q ...)`.
    pub theta: Mat<S>,
    pub basis: KernelBasis<S>,
    /// Per-node covariance blocks `C^i / T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Mat<S>>>,
    pub wall_time: WallTime,
    /// Largest relative residual of the linear systems (MF family and CF).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    /// Final negative log-likelihood, when the estimator evaluates it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nll: Option<S>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TracePoint>,
    /// Nodes left out because they have no events; their rows are NaN.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_nodes: Vec<usize>,
}

impl<S: Scalar> FitResult<S> {
    pub(crate) fn new(method: Method, theta: Mat<S>, basis: KernelBasis<S>) -> Self {
        Self {
            method,
            theta,
            basis,
            covariance: None,
            wall_time: WallTime::default(),
            residual: None,
            iterations: None,
            converged: None,
            nll: None,
            trajectory: Vec::new(),
            skipped_nodes: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.theta.rows()
    }

    pub fn mu(&self) -> Vec<S> {
        (0..self.d()).map(|i| self.theta[(i, 0)]).collect()
    }

    pub fn alpha(&self) -> AlphaTensor<S> {
        let idx = crate::kernels::AIndex::new(self.d(), self.basis.len());
        AlphaTensor::from_fn(self.d(), self.basis.len(), |i, j, q| self.theta[(i, idx.index(j, q))])
    }

    /// The estimate as model parameters. Fails on negative or NaN entries;
    /// see [`clipped`](Self::clipped).
    pub fn params(&self) -> Result<HawkesParams<S>> {
        let p = HawkesParams::from_theta(&self.theta, self.basis.clone())?;
        p.validate()?;
        Ok(p)
    }

    /// Copy with negative entries of `theta` set to zero.
    pub fn clipped(&self) -> Self {
        let mut out = self.clone();
        out.theta.as_mut_slice().iter_mut().for_each(|x| {
            if *x < S::zero() {
                *x = S::zero();
            }
        });
        out
    }

    /// Standard errors `sqrt(diag(C^i / T))`, when the covariance is known.
    pub fn std_errors(&self) -> Option<Mat<S>> {
        let cov = self.covariance.as_ref()?;
        let dim = self.theta.cols();
        Some(Mat::from_fn(self.d(), dim, |i, a| cov[i][(a, a)].max(S::zero()).sqrt()))
    }
}
