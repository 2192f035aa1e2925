//! The `sweep` command: simulate at every axis point and seed, fit with
//! every method, and report errors, likelihoods, timings and diagnostics as
//! one long table.

use std::io::Write;

use hawkesmf::diagnostics::{
    abs_error, default_grid_step, fluctuation_ratio_empirical, fluctuation_ratio_theoretical, mf_error_bound, rel_error, t_star,
};
use hawkesmf::params::SlotPattern;
use hawkesmf::simulation::{simulate_with, SimOptions};
use hawkesmf::{Basis64, Events64, HawkesParams, Method, Params64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepMode};
use crate::error::CliError;
use crate::runner::{coupling_std_error, fit_nll, run_method, MethodRun};

/// One (axis point, seed, fitting basis, method) result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub d: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub phi_norm: f64,
    /// Decay rates of the generating basis, `;`-separated.
    pub beta_true: String,
    /// Decay rates of the fitting basis, `;`-separated.
    pub beta_in: String,
    pub seed: u64,
    pub method: String,
    pub n_events: Option<usize>,
    pub rel_error: Option<f64>,
    pub abs_error: Option<f64>,
    pub nll: Option<f64>,
    pub preprocess_s: Option<f64>,
    pub solve_s: Option<f64>,
    pub total_s: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// Node-averaged fluctuation ratio of the true intensity.
    pub r_empirical: Option<f64>,
    pub r_theoretical: Option<f64>,
    pub t_star: Option<f64>,
    /// Largest per-node mean-field error bound, evaluated at the estimate.
    pub bound: Option<f64>,
    /// Coupling error expected from the estimator's covariance alone.
    pub se_abs: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    /// Key used to put rows in a reproducible order.
    fn sort_key(&self) -> (f64, usize, f64, u64, f64, Method) {
        let beta_in = self.beta_in.split(';').next().and_then(|b| b.parse().ok()).unwrap_or(0.0);
        (self.horizon, self.d, self.phi_norm, self.seed, beta_in, self.method.parse().unwrap_or(Method::Mf))
    }
}

fn join(betas: &[f64]) -> String {
    betas.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Data-level quantities shared by every row of one simulated sample.
struct Sample {
    truth: Params64,
    events: Events64,
    r_empirical: Option<f64>,
    r_theoretical: Option<f64>,
    t_star: Option<f64>,
}

fn is_homogeneous(cfg: &ExperimentConfig) -> bool {
    cfg.p == 1 && cfg.slot_patterns()[0] == SlotPattern::Blocks
}

fn sample(cfg: &ExperimentConfig, d: usize, horizon: f64, phi: f64, seed: u64) -> Result<Sample, CliError> {
    let truth = cfg.truth(d, phi)?;
    let events = simulate_with(&truth, horizon, seed, &SimOptions { burnin: cfg.burnin })?;
    let step = cfg.diagnostics.grid_step.unwrap_or_else(|| default_grid_step(&events, &truth));
    let r = fluctuation_ratio_empirical(&events, &truth, step)?;
    let r_empirical = Some(r.iter().sum::<f64>() / r.len() as f64);

    let rates = truth.stationary_intensity()?;
    let lambda = rates.iter().sum::<f64>() / d as f64;
    let d_eff = d / cfg.blocks.n_blocks;
    let beta_min = cfg.kernel.betas.iter().copied().fold(f64::INFINITY, f64::min);
    let r_theoretical = if is_homogeneous(cfg) { fluctuation_ratio_theoretical(d_eff, phi, beta_min, lambda).ok() } else { None };
    let t_star = t_star(lambda, beta_min, d_eff, phi, cfg.diagnostics.eta).ok();
    Ok(Sample { truth, events, r_empirical, r_theoretical, t_star })
}

fn fill(row: &mut SweepRow, cfg: &ExperimentConfig, s: &Sample, run: &MethodRun) -> Result<(), CliError> {
    let fit = &run.fit;
    let est = fit.alpha();
    row.rel_error = rel_error(&est, &s.truth.alpha).ok();
    row.abs_error = Some(abs_error(&est, &s.truth.alpha)?);
    row.preprocess_s = Some(fit.wall_time.preprocess);
    row.solve_s = Some(fit.wall_time.solve);
    row.total_s = Some(fit.wall_time.total());
    row.iterations = fit.iterations;
    row.converged = fit.converged;
    row.se_abs = coupling_std_error(fit);
    row.nll = Some(fit_nll(fit, &s.events)?);
    if fit.method == Method::Mf && cfg.diagnostics.error_bound {
        if let Some(aux) = &run.aux {
            let at = HawkesParams::from_theta(&fit.theta, fit.basis.clone())?;
            let bound = mf_error_bound(aux, &at, cfg.diagnostics.grid_step, &s.events, fit.covariance.as_deref())?;
            row.bound = Some(bound.into_iter().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    Ok(())
}

fn rows_for_point(cfg: &ExperimentConfig, d: usize, horizon: f64, phi: f64, seed: u64) -> Vec<SweepRow> {
    let fitting: Vec<Vec<f64>> = match cfg.sweep.mode {
        SweepMode::Standard => vec![cfg.kernel.betas.clone()],
        SweepMode::BetaMisspec => cfg.sweep.beta_in.iter().flatten().map(|&b| vec![b]).collect(),
    };
    let blank = |beta_in: &[f64], method: Method| SweepRow {
        mode: cfg.sweep.mode,
        d,
        horizon,
        phi_norm: phi,
        beta_true: join(&cfg.kernel.betas),
        beta_in: join(beta_in),
        seed,
        method: method.name().to_owned(),
        n_events: None,
        rel_error: None,
        abs_error: None,
        nll: None,
        preprocess_s: None,
        solve_s: None,
        total_s: None,
        iterations: None,
        converged: None,
        r_empirical: None,
        r_theoretical: None,
        t_star: None,
        bound: None,
        se_abs: None,
        error: None,
    };

    let s = match sample(cfg, d, horizon, phi, seed) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("sample d={d} T={horizon} phi={phi} seed={seed} failed: {e}");
            return fitting
                .iter()
                .flat_map(|b| cfg.methods.iter().map(move |&m| (b, m)))
                .map(|(b, m)| SweepRow { error: Some(e.to_string()), ..blank(b, m) })
                .collect();
        }
    };

    let mut rows = Vec::new();
    for betas in &fitting {
        let basis = Basis64 { betas: betas.clone(), ..cfg.kernel.clone() };
        for &method in &cfg.methods {
            let mut row = SweepRow {
                n_events: Some(s.events.len()),
                r_empirical: s.r_empirical,
                r_theoretical: s.r_theoretical,
                t_star: s.t_star,
                ..blank(betas, method)
            };
            let outcome = run_method(method, &s.events, &basis, &cfg.estimator).and_then(|run| fill(&mut row, cfg, &s, &run));
            if let Err(e) = outcome {
                log::warn!("{method} at d={d} T={horizon} phi={phi} seed={seed} failed: {e}");
                row.error = Some(e.to_string());
            }
            rows.push(row);
        }
    }
    rows
}

/// Runs the full sweep on the current rayon pool and returns the rows in
/// axis order. Failures are recorded per row and do not stop the run.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &horizon in cfg.horizons() {
        for &d in cfg.dims() {
            for &phi in cfg.phi_norms() {
                points.extend(cfg.seeds().map(|seed| (d, horizon, phi, seed)));
            }
        }
    }
    let (tx, rx) = std::sync::mpsc::channel();
    points.par_iter().for_each_with(tx, |tx, &(d, horizon, phi, seed)| {
        for row in rows_for_point(cfg, d, horizon, phi, seed) {
            tx.send(row).expect("sweep sink is alive");
        }
    });
    let mut rows: Vec<SweepRow> = rx.into_iter().collect();
    rows.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).expect("axis values are finite"));
    Ok(rows)
}

/// Writes `# config=<json>` followed by the CSV table.
pub fn write_sweep<W: Write>(cfg: &ExperimentConfig, rows: &[SweepRow], mut out: W) -> Result<(), CliError> {
    writeln!(out, "# config={}", cfg.echo()).map_err(|e| CliError::io("<sweep output>", e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io("<sweep output>", e))?;
    Ok(())
}
