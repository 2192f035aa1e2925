//! The `simulate` command.

use std::path::Path;

use hawkesmf::simulation::{simulate_with, SimOptions};
use hawkesmf::{EventMeta, Events64};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Samples the configured model at its base `d`, `T` and seed.
pub fn simulate_config(cfg: &ExperimentConfig) -> Result<(Events64, EventMeta), CliError> {
    cfg.validate()?;
    let truth = cfg.truth(cfg.d, cfg.blocks.phi_norm)?;
    let events = simulate_with(&truth, cfg.horizon, cfg.seed, &SimOptions { burnin: cfg.burnin })?;
    let meta = EventMeta {
        horizon: cfg.horizon,
        d: cfg.d,
        seed: Some(cfg.seed),
        lambda_bar: Some(events.lambda_bar()),
        phi_norm: Some(truth.spectral_norm_phi()),
        config: cfg.to_value(),
    };
    Ok((events, meta))
}

/// Writes the event CSV to `out` and its JSON sidecar next to it.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<EventMeta, CliError> {
    let (events, meta) = simulate_config(cfg)?;
    events.write_csv_file(out)?;
    meta.write_for(out)?;
    log::info!("wrote {} events to {}", events.len(), out.display());
    Ok(meta)
}

/// One-line summary printed after simulating.
pub fn describe(meta: &EventMeta) -> String {
    let rates: Vec<String> = meta.lambda_bar.iter().flatten().map(|r| format!("{r:.6}")).collect();
    format!("seed={} lambda_bar=[{}] phi_norm_1={:.6}", meta.seed.unwrap_or_default(), rates.join(","), meta.phi_norm.unwrap_or(f64::NAN))
}
