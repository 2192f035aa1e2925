//! The `fit` command.

use std::path::PathBuf;

use hawkesmf::{Basis64, Events64, Fit64, Method};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::runner::{fit_nll, run_method};

#[derive(Clone, Debug, Default)]
pub struct FitRequest {
    pub events: PathBuf,
    pub method: Option<Method>,
    /// Decay rates of the fitting basis; falls back to the configuration,
    /// then to the configuration embedded in the event sidecar.
    pub betas: Option<Vec<f64>>,
    pub max_iter: Option<usize>,
    pub horizon: Option<f64>,
    pub d: Option<usize>,
    pub config: Option<ExperimentConfig>,
}

/// The JSON document written by `fit`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub events: PathBuf,
    pub seed: Option<u64>,
    pub config: Option<ExperimentConfig>,
    pub method: Method,
    pub n_events: usize,
    pub nll: f64,
    pub result: Fit64,
}

pub fn cmd_fit(req: &FitRequest) -> Result<FitOutput, CliError> {
    if let Some(cfg) = &req.config {
        cfg.validate()?;
    }
    let (events, meta) = Events64::read_csv_file(&req.events, req.horizon, req.d)?;
    let embedded = meta.as_ref().and_then(|m| serde_json::from_value::<ExperimentConfig>(m.config.clone()).ok());
    let config = req.config.clone().or(embedded);

    let method = req
        .method
        .or_else(|| config.as_ref().map(|c| c.methods[0]))
        .ok_or_else(|| CliError::Config("no method given (use --method or a config)".into()))?;
    let basis = match (&req.betas, &config) {
        (Some(b), _) => Basis64::exponential(b.clone()).map_err(|e| CliError::Config(e.to_string()))?,
        (None, Some(c)) => c.kernel.clone(),
        (None, None) => return Err(CliError::Config("no kernel given (use --betas or a config)".into())),
    };
    let mut est = config.as_ref().map(|c| c.estimator.clone()).unwrap_or_default();
    if let Some(m) = req.max_iter {
        est.mle_max_iter = m;
    }
    let mut config = config;
    if let Some(c) = config.as_mut() {
        c.estimator = est.clone();
    }

    let run = run_method(method, &events, &basis, &est)?;
    let nll = fit_nll(&run.fit, &events)?;
    Ok(FitOutput {
        events: req.events.clone(),
        seed: meta.and_then(|m| m.seed),
        config,
        method,
        n_events: events.len(),
        nll,
        result: run.fit,
    })
}

/// Human-readable summary of a fit.
pub fn describe(out: &FitOutput) -> String {
    let fit = &out.result;
    let mut line = format!("method={} events={} nll={:.10e}", out.method, out.n_events, out.nll);
    if let Some(r) = fit.residual {
        line += &format!(" residual={r:.3e}");
    }
    if let Some(it) = fit.iterations {
        line += &format!(" iterations={it} converged={}", fit.converged.unwrap_or(false));
    }
    line +=
        &format!(" preprocess_s={:.6} solve_s={:.6} total_s={:.6}", fit.wall_time.preprocess, fit.wall_time.solve, fit.wall_time.total());
    line
}
