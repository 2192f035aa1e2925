//! Experiment configuration: one JSON file describing the model, the
//! estimators and their settings, sweep axes and output locations.
//!
//! Every field is written back out when a configuration is echoed, including
//! the ones that were left at their defaults, so any output file carries the
//! complete recipe that produced it.

use std::path::{Path, PathBuf};

use hawkesmf::aux_stats::ZeroEventPolicy;
use hawkesmf::estimators::{ApproxOrder, MfOptions, MleOptions};
use hawkesmf::params::{structured_alpha, SlotPattern};
use hawkesmf::{Basis64, Method, Params64};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Interaction structure: `n_blocks` clusters and, per basis slot, which
/// node pairs interact. The tensor is scaled to `||Phi||_1 = phi_norm`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub n_blocks: usize,
    pub phi_norm: f64,
    /// One pattern per basis kernel. Empty means within-block interactions
    /// on the first kernel only.
    #[serde(default)]
    pub slots: Vec<SlotPattern>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Simulate and fit at every combination of the axes.
    #[default]
    Standard,
    /// Simulate with the configured decay rate, then fit under each
    /// `beta_in`.
    BetaMisspec,
}

/// Sweep axes. An absent axis stays at the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub mode: SweepMode,
    #[serde(default, rename = "T")]
    pub horizons: Option<Vec<f64>>,
    #[serde(default)]
    pub d: Option<Vec<usize>>,
    #[serde(default)]
    pub phi_norm: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_in: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    #[serde(default = "defaults::mle_tol")]
    pub mle_tol: f64,
    #[serde(default = "defaults::mle_max_iter")]
    pub mle_max_iter: usize,
    #[serde(default = "defaults::yes")]
    pub mle_nonnegative: bool,
    #[serde(default)]
    pub clip_negative: bool,
    #[serde(default)]
    pub zero_events: ZeroEventPolicy,
    #[serde(default)]
    pub approx_order: ApproxOrder,
    /// Midpoint grid of the contrast function; `null` picks `0.1 / beta_max`.
    #[serde(default)]
    pub cf_quad_step: Option<f64>,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            mle_tol: defaults::mle_tol(),
            mle_max_iter: defaults::mle_max_iter(),
            mle_nonnegative: true,
            clip_negative: false,
            zero_events: ZeroEventPolicy::default(),
            approx_order: ApproxOrder::default(),
            cf_quad_step: None,
        }
    }
}

impl EstimatorSpec {
    pub fn mf_options(&self) -> MfOptions {
        MfOptions { want_covariance: true, clip_negative: self.clip_negative, zero_events: self.zero_events }
    }

    pub fn mle_options(&self) -> MleOptions<f64> {
        MleOptions { tol: self.mle_tol, max_iter: self.mle_max_iter, nonnegative: self.mle_nonnegative, init: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    /// Intensity reconstruction grid; `null` picks the library default.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Kernel regularity exponent in `T*`.
    #[serde(default = "defaults::one_f")]
    pub eta: f64,
    /// Evaluate the mean-field error bound for MF rows.
    #[serde(default = "defaults::yes")]
    pub error_bound: bool,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { grid_step: None, eta: 1.0, error_bound: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    /// Target NLL is the converged likelihood value plus this fraction of
    /// its magnitude.
    #[serde(default = "defaults::target_rel_tol")]
    pub target_rel_tol: f64,
    /// Also emit one row per optimizer iteration.
    #[serde(default = "defaults::yes")]
    pub trajectory: bool,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { target_rel_tol: defaults::target_rel_tol(), trajectory: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub fit: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<PathBuf>,
    #[serde(default)]
    pub bench: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub p: usize,
    pub kernel: Basis64,
    pub blocks: BlockSpec,
    /// Uniform baseline intensity, used unless `target_rate` is set.
    pub mu: f64,
    /// Hold the stationary rate of every node at this value by adjusting
    /// the baseline: `mu_i = rate (1 - sum_j Phi^{ij})`.
    #[serde(default)]
    pub target_rate: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
    /// Seeds `seed, seed + 1, ...` used by sweeps and benchmarks.
    #[serde(default = "defaults::one")]
    pub n_seeds: usize,
    #[serde(default)]
    pub burnin: f64,
    #[serde(with = "method_names")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default)]
    pub output: OutputSpec,
    /// Worker pool width; `null` defers to the command line or environment.
    #[serde(default)]
    pub threads: Option<usize>,
}

mod defaults {
    pub fn mle_tol() -> f64 {
        1e-8
    }
    pub fn mle_max_iter() -> usize {
        1000
    }
    pub fn yes() -> bool {
        true
    }
    pub fn one() -> usize {
        1
    }
    pub fn one_f() -> f64 {
        1.0
    }
    pub fn target_rel_tol() -> f64 {
        1e-3
    }
}

/// Methods appear in configs by their lower-case names.
mod method_names {
    use hawkesmf::Method;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(methods: &[Method], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(methods.iter().map(|m| m.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Method>, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names.iter().map(|n| n.parse().map_err(de::Error::custom)).collect()
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_phi(phi: f64) -> Result<(), CliError> {
    if !(phi >= 0.0) {
        return Err(invalid(format!("phi_norm must be nonnegative, got {phi}")));
    }
    if phi >= 1.0 {
        return Err(invalid(format!("||Phi||_1 = {phi} violates the stability condition ||Phi||_1 < 1")));
    }
    Ok(())
}

fn nonempty<T>(axis: &Option<Vec<T>>, name: &str) -> Result<(), CliError> {
    match axis {
        Some(v) if v.is_empty() => Err(invalid(format!("sweep axis {name} is empty"))),
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid(format!("cannot parse config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Compact JSON of the full configuration.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.kernel.validate().map_err(|e| invalid(e.to_string()))?;
        if self.p != self.kernel.betas.len() {
            return Err(invalid(format!("p = {} but the kernel lists {} decay rates", self.p, self.kernel.betas.len())));
        }
        if !self.blocks.slots.is_empty() && self.blocks.slots.len() != self.p {
            return Err(invalid(format!("blocks.slots has {} entries, expected p = {}", self.blocks.slots.len(), self.p)));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods must list at least one of mf, mf_approx, mle, cf"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid(format!("T must be positive, got {}", self.horizon)));
        }
        if !(self.mu > 0.0) {
            return Err(invalid(format!("mu must be positive, got {}", self.mu)));
        }
        if let Some(r) = self.target_rate {
            if !(r > 0.0) {
                return Err(invalid(format!("target_rate must be positive, got {r}")));
            }
        }
        if !(self.burnin >= 0.0) {
            return Err(invalid(format!("burnin must be nonnegative, got {}", self.burnin)));
        }
        if self.n_seeds == 0 {
            return Err(invalid("n_seeds must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        let est = &self.estimator;
        if !(est.mle_tol > 0.0) {
            return Err(invalid("estimator.mle_tol must be positive"));
        }
        if est.cf_quad_step.is_some_and(|s| !(s > 0.0)) {
            return Err(invalid("estimator.cf_quad_step must be positive"));
        }
        if self.diagnostics.grid_step.is_some_and(|s| !(s > 0.0)) {
            return Err(invalid("diagnostics.grid_step must be positive"));
        }
        if !(self.diagnostics.eta > 0.0) {
            return Err(invalid("diagnostics.eta must be positive"));
        }
        if !(self.bench.target_rel_tol >= 0.0) {
            return Err(invalid("bench.target_rel_tol must be nonnegative"));
        }

        let sw = &self.sweep;
        nonempty(&sw.horizons, "T")?;
        nonempty(&sw.d, "d")?;
        nonempty(&sw.phi_norm, "phi_norm")?;
        nonempty(&sw.beta_in, "beta_in")?;
        for &t in self.horizons() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(invalid(format!("sweep T values must be positive, got {t}")));
            }
        }
        for &d in self.dims() {
            if d == 0 || self.blocks.n_blocks == 0 || self.blocks.n_blocks > d {
                return Err(invalid(format!("need 1 <= n_blocks <= d, got n_blocks = {}, d = {d}", self.blocks.n_blocks)));
            }
        }
        for &phi in self.phi_norms() {
            check_phi(phi)?;
        }
        match sw.mode {
            SweepMode::Standard => {
                if sw.beta_in.is_some() {
                    return Err(invalid("sweep.beta_in applies only to mode beta_misspec"));
                }
            }
            SweepMode::BetaMisspec => {
                let Some(betas) = &sw.beta_in else {
                    return Err(invalid("mode beta_misspec needs sweep.beta_in"));
                };
                if self.p != 1 {
                    return Err(invalid("mode beta_misspec supports a single basis kernel (p = 1)"));
                }
                if let Some(b) = betas.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
                    return Err(invalid(format!("beta_in values must be positive, got {b}")));
                }
            }
        }
        // the baseline implied by target_rate must stay positive
        for &d in self.dims() {
            for &phi in self.phi_norms() {
                self.truth(d, phi)?;
            }
        }
        Ok(())
    }

    pub fn horizons(&self) -> &[f64] {
        self.sweep.horizons.as_deref().unwrap_or(std::slice::from_ref(&self.horizon))
    }

    pub fn dims(&self) -> &[usize] {
        self.sweep.d.as_deref().unwrap_or(std::slice::from_ref(&self.d))
    }

    pub fn phi_norms(&self) -> &[f64] {
        self.sweep.phi_norm.as_deref().unwrap_or(std::slice::from_ref(&self.blocks.phi_norm))
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |k| self.seed + k)
    }

    pub fn slot_patterns(&self) -> Vec<SlotPattern> {
        if self.blocks.slots.is_empty() {
            (0..self.p).map(|q| if q == 0 { SlotPattern::Blocks } else { SlotPattern::Empty }).collect()
        } else {
            self.blocks.slots.clone()
        }
    }

    /// Generating parameters for `d` nodes at coupling norm `phi`.
    pub fn truth(&self, d: usize, phi: f64) -> Result<Params64, CliError> {
        check_phi(phi)?;
        let alpha = structured_alpha(d, self.blocks.n_blocks, phi, &self.slot_patterns()).map_err(|e| invalid(e.to_string()))?;
        let mu = match self.target_rate {
            Some(rate) => {
                let phi_mat = alpha.integrated();
                let mu: Vec<f64> = (0..d).map(|i| rate * (1.0 - phi_mat.row(i).iter().sum::<f64>())).collect();
                if let Some(i) = mu.iter().position(|&m| !(m > 0.0)) {
                    return Err(invalid(format!("target_rate {rate} needs a nonpositive baseline on node {i}")));
                }
                mu
            }
            None => vec![self.mu; d],
        };
        Params64::new(mu, alpha, self.kernel.clone()).map_err(|e| invalid(e.to_string()))
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, horizon: Option<f64>, d: Option<usize>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(t) = horizon {
            self.horizon = t;
        }
        if let Some(d) = d {
            self.d = d;
        }
        self
    }
}
