//! The `bench` command: time each method against a shared likelihood
//! target.
//!
//! The target is the converged maximum-likelihood value loosened by
//! `bench.target_rel_tol`. Linear estimators are timed end to end and marked
//! as reaching the target when their (clipped) estimate scores at or below
//! it. For the likelihood fit the time to target is the first optimizer
//! iterate at or below it, precomputation included.

use std::io::Write;

use hawkesmf::estimators::fit_mle;
use hawkesmf::simulation::{simulate_with, SimOptions};
use hawkesmf::Method;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::runner::{fit_nll, run_method};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seed: u64,
    pub method: String,
    /// `preprocess`, `solve`, `to_target`, `total`, or `iter` for trajectory
    /// points.
    pub phase: String,
    pub iteration: Option<usize>,
    pub seconds: Option<f64>,
    pub nll: Option<f64>,
    pub target: f64,
    pub reached: Option<bool>,
}

/// Per-seed summary, handy for assertions.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSummary {
    pub seed: u64,
    pub n_events: usize,
    pub target: f64,
    /// `(method, end-to-end seconds, nll, reached)`.
    pub totals: Vec<(Method, f64, f64, bool)>,
    /// Seconds until the likelihood fit first met the target.
    pub mle_to_target: Option<f64>,
    pub mle_trajectory: Vec<f64>,
}

/// Benchmarks every configured method at the base `d`, `T` and
/// `phi_norm`, once per seed. The likelihood fit always runs because it
/// defines the target.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<(Vec<BenchRow>, Vec<BenchSummary>), CliError> {
    cfg.validate()?;
    let truth = cfg.truth(cfg.d, cfg.blocks.phi_norm)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for seed in cfg.seeds() {
        let events = simulate_with(&truth, cfg.horizon, seed, &SimOptions { burnin: cfg.burnin })?;
        let mle = fit_mle(&events, &cfg.kernel, &cfg.estimator.mle_options())?;
        let converged = mle.nll.expect("likelihood fits report their value");
        let target = converged + cfg.bench.target_rel_tol * converged.abs();
        let row = |method: Method, phase: &str, iteration, seconds, nll: Option<f64>| BenchRow {
            seed,
            method: method.name().to_owned(),
            phase: phase.to_owned(),
            iteration,
            seconds,
            nll,
            target,
            reached: nll.map(|v| v <= target),
        };

        let hit = mle.trajectory.iter().find(|p| p.nll <= target);
        let mut summary = BenchSummary {
            seed,
            n_events: events.len(),
            target,
            totals: Vec::new(),
            mle_to_target: hit.map(|p| p.seconds),
            mle_trajectory: mle.trajectory.iter().map(|p| p.nll).collect(),
        };
        for &method in &cfg.methods {
            let fit = if method == Method::Mle { mle.clone() } else { run_method(method, &events, &cfg.kernel, &cfg.estimator)?.fit };
            let nll = fit_nll(&fit, &events)?;
            let wt = fit.wall_time;
            if method == Method::Mle {
                rows.push(row(method, "precompute", None, Some(wt.preprocess), None));
                rows.push(BenchRow {
                    reached: Some(hit.is_some()),
                    ..row(method, "to_target", hit.map(|p| p.iteration), hit.map(|p| p.seconds), hit.map(|p| p.nll))
                });
            } else {
                rows.push(row(method, "preprocess", None, Some(wt.preprocess), None));
                rows.push(row(method, "solve", None, Some(wt.solve), None));
            }
            rows.push(row(method, "total", fit.iterations, Some(wt.total()), Some(nll)));
            summary.totals.push((method, wt.total(), nll, nll <= target));
        }
        if cfg.bench.trajectory {
            rows.extend(mle.trajectory.iter().map(|p| row(Method::Mle, "iter", Some(p.iteration), Some(p.seconds), Some(p.nll))));
        }
        summaries.push(summary);
    }
    Ok((rows, summaries))
}

/// Writes `# config=<json>` followed by the CSV table.
pub fn write_bench<W: Write>(cfg: &ExperimentConfig, rows: &[BenchRow], mut out: W) -> Result<(), CliError> {
    writeln!(out, "# config={}", cfg.echo()).map_err(|e| CliError::io("<bench output>", e))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io("<bench output>", e))?;
    Ok(())
}
