//! Runs one estimator on one event sequence with the configured settings.

use std::time::Instant;

use hawkesmf::estimators::{fit_contrast, fit_mean_field_approx, fit_mean_field_events, fit_mle, neg_log_likelihood};
use hawkesmf::{aux_stats, Aux64, Basis64, Events64, Fit64, Method};

use crate::config::EstimatorSpec;
use crate::error::CliError;

/// A fit together with the statistics it was built from, when it used them.
pub struct MethodRun {
    pub fit: Fit64,
    pub aux: Option<Aux64>,
}

pub fn run_method(method: Method, events: &Events64, basis: &Basis64, est: &EstimatorSpec) -> Result<MethodRun, CliError> {
    let run = match method {
        Method::Mf => {
            let (fit, aux) = fit_mean_field_events(events, basis, &est.mf_options())?;
            MethodRun { fit, aux: Some(aux) }
        }
        Method::MfApprox => {
            let start = Instant::now();
            let aux = aux_stats::compute(events, basis, est.zero_events)?;
            let preprocess = start.elapsed().as_secs_f64();
            let mut fit = fit_mean_field_approx(&aux, basis, est.approx_order)?;
            fit.wall_time.preprocess = preprocess;
            if est.clip_negative {
                fit = fit.clipped();
            }
            MethodRun { fit, aux: Some(aux) }
        }
        Method::Mle => MethodRun { fit: fit_mle(events, basis, &est.mle_options())?, aux: None },
        Method::Cf => {
            let mut fit = fit_contrast(events, basis, est.cf_quad_step)?;
            if est.clip_negative {
                fit = fit.clipped();
            }
            MethodRun { fit, aux: None }
        }
    };
    Ok(run)
}

/// Negative log-likelihood of a fit. Likelihood fits carry their own value;
/// linear estimators are scored with negative entries set to zero so that
/// every intensity stays nonnegative.
pub fn fit_nll(fit: &Fit64, events: &Events64) -> Result<f64, CliError> {
    if let Some(v) = fit.nll {
        return Ok(v);
    }
    if fit.theta.as_slice().iter().any(|x| x.is_nan()) {
        return Ok(f64::NAN);
    }
    let params = fit.clipped().params()?;
    Ok(neg_log_likelihood(&params, events)?)
}

/// Frobenius norm of the coupling standard errors implied by the
/// covariance, i.e. the expected size of `abs_error` from noise alone.
pub fn coupling_std_error(fit: &Fit64) -> Option<f64> {
    let cov = fit.covariance.as_ref()?;
    let total: f64 = cov.iter().map(|c| (1..c.rows()).map(|a| c[(a, a)].max(0.0)).sum::<f64>()).sum();
    Some(total.sqrt())
}
