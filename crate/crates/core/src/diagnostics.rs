//! Validity diagnostics for the mean-field approximation: intensity
//! fluctuation ratios, coupling error metrics, the mean-field error bound,
//! the horizon `T*`, and empirical second cumulants.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::aux_stats::AuxStats;
use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::linalg::{self, Mat};
use crate::params::{AlphaTensor, HawkesParams};
use crate::scalar::Scalar;

/// Which parameters an intensity was reconstructed under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamsSource {
    True,
    Fitted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FluctuationReport<S: Scalar> {
    pub r_empirical: Vec<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_theoretical: Option<S>,
    pub grid_step: S,
    pub params_used: HawkesParams<S>,
    pub params_source: ParamsSource,
}

/// Grid statistics of one node's reconstructed intensity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityMoments {
    /// Average of `lambda` over the grid.
    pub mean: f64,
    /// Variance about the grid average.
    pub variance: f64,
    /// Mean squared deviation from the empirical rate `Lambda^i`.
    pub msd_about_rate: f64,
    pub rate: f64,
}

/// Default grid: resolves both the fastest kernel and the typical spacing of
/// events, `min(0.1 / beta_max, 1 / (10 max Lambda))`.
pub fn default_grid_step<S: Scalar>(events: &EventSequence<S>, params: &HawkesParams<S>) -> S {
    let by_kernel = S::lit(0.1) / params.basis.max_beta();
    let max_rate = events.lambda_bar().into_iter().fold(S::zero(), S::max);
    if max_rate > S::zero() {
        by_kernel.min(S::one() / (S::lit(10.0) * max_rate))
    } else {
        by_kernel
    }
}

/// Samples `lambda^i_t` under `params` at `t = 0, step, 2 step, ... < T`.
/// An event at `t` only counts for times strictly after `t`.
pub fn intensity_moments<S: Scalar>(events: &EventSequence<S>, params: &HawkesParams<S>, grid_step: S) -> Result<Vec<IntensityMoments>> {
    if !(grid_step > S::zero()) || !grid_step.is_finite() {
        return Err(HawkesError::InvalidParameter(format!("grid step must be positive, got {grid_step}")));
    }
    if params.d() != events.d() {
        return Err(HawkesError::Shape(format!("parameters have {} nodes, events {}", params.d(), events.d())));
    }
    let d = params.d();
    let p = params.p();
    let betas = &params.basis.betas;
    let rates = events.lambda_bar();
    // jump[j][i * p + q]: increment of E[i][q] caused by an event on j
    let jump: Vec<Vec<f64>> =
        (0..d).map(|j| (0..d * p).map(|k| (params.alpha.get(k / p, j, k % p) * betas[k % p]).as_f64()).collect()).collect();
    let betas: Vec<f64> = betas.iter().map(|b| b.as_f64()).collect();
    let mu: Vec<f64> = params.mu.iter().map(|m| m.as_f64()).collect();
    let rate_f: Vec<f64> = rates.iter().map(|r| r.as_f64()).collect();
    let horizon = events.horizon().as_f64();
    let step = grid_step.as_f64();

    let mut excitation = vec![0.0f64; d * p];
    let mut t_ref = 0.0f64;
    let mut decay = vec![1.0f64; p];
    // running mean and sum of squared deviations (Welford)
    let mut mean = vec![0.0f64; d];
    let mut m2 = vec![0.0f64; d];
    let times = events.times();
    let nodes = events.nodes();
    let mut m = 0;
    let mut count = 0usize;
    loop {
        let t = step * count as f64;
        if t >= horizon {
            break;
        }
        while m < times.len() && times[m].as_f64() < t {
            let te = times[m].as_f64();
            for (dq, &b) in decay.iter_mut().zip(&betas) {
                *dq = (-b * (te - t_ref)).exp();
            }
            for (k, (e, &jmp)) in excitation.iter_mut().zip(&jump[nodes[m]]).enumerate() {
                *e = *e * decay[k % p] + jmp;
            }
            t_ref = te;
            m += 1;
        }
        for (dq, &b) in decay.iter_mut().zip(&betas) {
            *dq = (-b * (t - t_ref)).exp();
        }
        for i in 0..d {
            let mut lam = mu[i];
            for q in 0..p {
                lam += excitation[i * p + q] * decay[q];
            }
            let delta = lam - mean[i];
            mean[i] += delta / (count + 1) as f64;
            m2[i] += delta * (lam - mean[i]);
        }
        count += 1;
    }
    let k = count.max(1) as f64;
    Ok((0..d)
        .map(|i| {
            let variance = m2[i] / k;
            let offset = mean[i] - rate_f[i];
            IntensityMoments { mean: mean[i], variance, msd_about_rate: variance + offset * offset, rate: rate_f[i] }
        })
        .collect())
}

/// `r_i`: standard deviation of the reconstructed intensity divided by the
/// empirical rate `Lambda^i`. NaN (with a warning) for nodes without events.
pub fn fluctuation_ratio_empirical<S: Scalar>(events: &EventSequence<S>, params: &HawkesParams<S>, grid_step: S) -> Result<Vec<S>> {
    let moments = intensity_moments(events, params, grid_step)?;
    Ok(moments
        .iter()
        .enumerate()
        .map(|(i, m)| {
            if m.rate > 0.0 {
                S::lit(m.variance.sqrt() / m.rate)
            } else {
                log::warn!("node {i} has no events; its fluctuation ratio is undefined");
                S::nan()
            }
        })
        .collect())
}

pub fn fluctuation_report<S: Scalar>(
    events: &EventSequence<S>,
    params: &HawkesParams<S>,
    source: ParamsSource,
    grid_step: Option<S>,
    r_theoretical: Option<S>,
) -> Result<FluctuationReport<S>> {
    let grid_step = grid_step.unwrap_or_else(|| default_grid_step(events, params));
    Ok(FluctuationReport {
        r_empirical: fluctuation_ratio_empirical(events, params, grid_step)?,
        r_theoretical,
        grid_step,
        params_used: params.clone(),
        params_source: source,
    })
}

/// Homogeneous prediction `||Phi|| sqrt(beta) / sqrt(2 d Lambda (1 - ||Phi||))`,
/// where `d` is the number of nodes sharing the excitation.
pub fn fluctuation_ratio_theoretical<S: Scalar>(d: usize, phi_norm: S, beta: S, lambda: S) -> Result<S> {
    if !(phi_norm >= S::zero() && phi_norm < S::one()) {
        return Err(HawkesError::Unstable { phi_norm: phi_norm.as_f64() });
    }
    if d == 0 || !(beta > S::zero()) || !(lambda > S::zero()) {
        return Err(HawkesError::InvalidParameter("d, beta and lambda must be positive".into()));
    }
    let two = S::lit(2.0);
    Ok(phi_norm * beta.sqrt() / (two * S::from_usize_lossy(d) * lambda * (S::one() - phi_norm)).sqrt())
}

fn check_same_shape<S: Scalar>(a: &AlphaTensor<S>, b: &AlphaTensor<S>) -> Result<()> {
    if a.d() != b.d() || a.p() != b.p() {
        return Err(HawkesError::Shape(format!("coupling tensors are {}x{}x{} and {}x{}x{}", a.d(), a.d(), a.p(), b.d(), b.d(), b.p())));
    }
    Ok(())
}

/// `sqrt(sum over nonzero true couplings of (inf / true - 1)^2)`.
pub fn rel_error<S: Scalar>(alpha_inf: &AlphaTensor<S>, alpha_true: &AlphaTensor<S>) -> Result<S> {
    check_same_shape(alpha_inf, alpha_true)?;
    let mut any = false;
    let mut sum = S::zero();
    for (&x, &t) in alpha_inf.as_slice().iter().zip(alpha_true.as_slice()) {
        if t != S::zero() {
            any = true;
            let r = x / t - S::one();
            sum = sum + r * r;
        }
    }
    if !any {
        return Err(HawkesError::InvalidParameter("relative error needs at least one nonzero true coupling".into()));
    }
    Ok(sum.sqrt())
}

/// `sqrt(sum of (inf - true)^2)` over all couplings.
pub fn abs_error<S: Scalar>(alpha_inf: &AlphaTensor<S>, alpha_true: &AlphaTensor<S>) -> Result<S> {
    check_same_shape(alpha_inf, alpha_true)?;
    Ok(alpha_inf.as_slice().iter().zip(alpha_true.as_slice()).fold(S::zero(), |acc, (&x, &t)| acc + (x - t) * (x - t)).sqrt())
}

/// The product `(V / Lambda^2) ||C|| ||Lambda_ext||`.
pub fn error_bound_value<S: Scalar>(variance_ratio: S, c_norm: S, lambda_norm: S) -> S {
    variance_ratio * c_norm * lambda_norm
}

/// Per-node bound on `||theta_MF - theta_MLE||`.
///
/// The intensity is reconstructed under `params` on the diagnostic grid;
/// `V` is its mean squared deviation from `Lambda^i`. `||C^i||` is the
/// spectral norm of `(J^i)^{-1}`, taken from `covariance` (blocks `C^i / T`)
/// when given and otherwise from the smallest eigenvalue of `J^i`.
pub fn mf_error_bound<S: Scalar>(
    aux: &AuxStats<S>,
    params: &HawkesParams<S>,
    grid_step: Option<S>,
    events: &EventSequence<S>,
    covariance: Option<&[Mat<S>]>,
) -> Result<Vec<S>> {
    if aux.d != params.d() || aux.p != params.p() {
        return Err(HawkesError::Shape("statistics and parameters disagree in shape".into()));
    }
    let step = grid_step.unwrap_or_else(|| default_grid_step(events, params));
    let moments = intensity_moments(events, params, step)?;
    let ext_norm = linalg::norm2(&aux.lambda_bar_ext());
    (0..aux.d)
        .map(|i| {
            let rate = aux.lambda_bar[i];
            if !(rate > S::zero()) {
                return Ok(S::nan());
            }
            let c_norm = match covariance {
                Some(cov) => linalg::sym_spectral_norm(&cov[i]) * aux.horizon,
                None => {
                    let active = aux.active_channels();
                    let ev = linalg::sym_eigenvalues(&aux.j[i].submatrix(&active));
                    let min = ev.first().copied().unwrap_or(S::nan());
                    if !(min > S::zero()) {
                        return Err(HawkesError::Singular { node: i, min_eigenvalue: min.as_f64() });
                    }
                    S::one() / min
                }
            };
            let ratio = S::lit(moments[i].msd_about_rate) / (rate * rate);
            Ok(error_bound_value(ratio, c_norm, ext_norm))
        })
        .collect()
}

/// `T* = Lambda (2 / beta)^2 d (1 - ||Phi||)^(4 - 2 / eta) / ||Phi||^4`;
/// infinite when `||Phi|| = 0`.
pub fn t_star<S: Scalar>(lambda: S, beta: S, d: usize, phi_norm: S, eta: S) -> Result<S> {
    if !(phi_norm >= S::zero() && phi_norm < S::one()) {
        return Err(HawkesError::Unstable { phi_norm: phi_norm.as_f64() });
    }
    if !(eta > S::zero()) || !(beta > S::zero()) || !(lambda > S::zero()) {
        return Err(HawkesError::InvalidParameter("lambda, beta and eta must be positive".into()));
    }
    if phi_norm == S::zero() {
        return Ok(S::infinity());
    }
    let tau = S::lit(2.0) / beta;
    let expo = S::lit(4.0) - S::lit(2.0) / eta;
    Ok(lambda * tau * tau * S::from_usize_lossy(d) * (S::one() - phi_norm).powf(expo) / phi_norm.powi(4))
}

/// Binned second cumulant `c^{ij}(t)` for lags in `[0, lag_max)`; `i` is the
/// node of the later event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Cumulant2<S: Scalar> {
    pub bin_width: S,
    pub n_bins: usize,
    /// `values[i][j][bin]`.
    pub values: Vec<Vec<Vec<S>>>,
    /// `max_{ij} sum_bins |c^{ij}| bin_width`.
    pub c_max_l1: S,
}

impl<S: Scalar> Cumulant2<S> {
    /// Long-format CSV `i,j,lag,value` with `lag` at bin centres.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,lag,value")?;
        let half = self.bin_width * S::lit(0.5);
        for (i, row) in self.values.iter().enumerate() {
            for (j, bins) in row.iter().enumerate() {
                for (b, v) in bins.iter().enumerate() {
                    writeln!(w, "{i},{j},{},{v}", self.bin_width * S::from_usize_lossy(b) + half)?;
                }
            }
        }
        Ok(())
    }
}

pub fn empirical_cumulant2<S: Scalar>(events: &EventSequence<S>, lag_max: S, bin_width: S) -> Result<Cumulant2<S>> {
    if !(bin_width > S::zero()) || !(lag_max >= S::zero()) {
        return Err(HawkesError::InvalidParameter("bin width must be positive and lag_max nonnegative".into()));
    }
    let ratio = lag_max / bin_width;
    let n_bins = ratio.round().to_usize().unwrap_or(0);
    if (ratio - S::from_usize_lossy(n_bins)).abs() > S::lit(1e-9) * ratio.max(S::one()) {
        return Err(HawkesError::InvalidParameter("lag_max must be a multiple of bin_width".into()));
    }
    let d = events.d();
    let mut counts = vec![vec![vec![0u64; n_bins]; d]; d];
    let times = events.times();
    let nodes = events.nodes();
    if n_bins > 0 {
        let mut lo = 0;
        for m in 0..times.len() {
            while times[m] - times[lo] >= lag_max {
                lo += 1;
            }
            for mp in lo..m {
                let b = ((times[m] - times[mp]) / bin_width).floor().to_usize().unwrap_or(n_bins);
                if b < n_bins {
                    counts[nodes[m]][nodes[mp]][b] += 1;
                }
            }
        }
    }
    let rates = events.lambda_bar();
    let norm = events.horizon() * bin_width;
    let mut c_max_l1 = S::zero();
    let values: Vec<Vec<Vec<S>>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let row: Vec<S> = counts[i][j].iter().map(|&c| S::lit(c as f64) / norm - rates[i] * rates[j]).collect();
                    let l1 = row.iter().fold(S::zero(), |a, v| a + v.abs()) * bin_width;
                    c_max_l1 = c_max_l1.max(l1);
                    row
                })
                .collect()
        })
        .collect();
    Ok(Cumulant2 { bin_width, n_bins, values, c_max_l1 })
}

/// Inputs of [`apriori_bound`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AprioriInputs<S: Scalar> {
    pub c_max_l1: S,
    /// Norm of the third cumulant. Not estimated by this crate; zero makes
    /// the `dJ` bound partial.
    pub k_max_l1: S,
    pub g_max: S,
    pub nu_max: S,
    pub lambda_min: S,
    pub lambda_max: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AprioriBound<S: Scalar> {
    /// Bound on `||theta^i_MF||` per node.
    pub theta_norm: Vec<S>,
    /// Bound on `||theta^i_MF - theta^i_MLE||` per node.
    pub error_norm: Vec<S>,
    /// Bound on every `|dk^{ia}|`.
    pub dk: S,
    /// Bound on `|dJ^{iab}|` when `a, b >= 1` share a source node.
    pub dj_same_source: S,
    /// Bound on the remaining `|dJ^{iab}|`.
    pub dj_other: S,
}

/// Model-free bounds from cumulant norms. `theta` is `d x (d p + 1)` (the
/// likelihood estimate in the error term) and `c_blocks[i]` is `C^i`.
pub fn apriori_bound<S: Scalar>(inputs: &AprioriInputs<S>, theta: &Mat<S>, c_blocks: &[Mat<S>], p: usize) -> Result<AprioriBound<S>> {
    let AprioriInputs { c_max_l1, k_max_l1, g_max, nu_max, lambda_min, lambda_max } = *inputs;
    if !(lambda_min > S::zero()) {
        return Err(HawkesError::InvalidParameter("lambda_min must be positive".into()));
    }
    if [c_max_l1, k_max_l1, g_max, nu_max, lambda_max].iter().any(|&v| !(v >= S::zero())) {
        return Err(HawkesError::InvalidParameter("cumulant and kernel norms must be nonnegative".into()));
    }
    let d = theta.rows();
    if c_blocks.len() != d || p == 0 || theta.cols() != d * p + 1 {
        return Err(HawkesError::Shape("theta, covariance blocks and p disagree".into()));
    }
    if k_max_l1 == S::zero() {
        log::warn!("third-cumulant norm is zero; the dJ bound omits that term");
    }
    let sqrt_dp = S::from_usize_lossy(d * p).sqrt();
    let lmin2 = lambda_min * lambda_min;
    let dk = g_max * c_max_l1 / lambda_min;
    let k_term = g_max * g_max * k_max_l1 / lmin2;
    let dj_other = S::lit(2.0) * dk + k_term;
    let dj_same_source = g_max * g_max * c_max_l1 / lmin2 + dj_other;
    let idx = crate::kernels::AIndex::new(d, p);
    let mut theta_norm = Vec::with_capacity(d);
    let mut error_norm = Vec::with_capacity(d);
    for i in 0..d {
        let c_norm = linalg::sym_spectral_norm(&c_blocks[i]);
        let row = theta.row(i);
        let total: S = row.iter().copied().sum();
        let mut same = S::zero();
        for b in 1..idx.dim() {
            for c in 1..idx.dim() {
                if idx.channel(b).map(|x| x.0) == idx.channel(c).map(|x| x.0) {
                    same = same + row[b] * row[c];
                }
            }
        }
        theta_norm.push(sqrt_dp * c_norm * dk);
        let err = c_max_l1 * g_max * lambda_max / lmin2 * total * total + nu_max * lambda_max * lambda_max / lmin2 * same;
        error_norm.push(sqrt_dp * c_norm * err);
    }
    Ok(AprioriBound { theta_norm, error_norm, dk, dj_same_source, dj_other })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn theoretical_ratio_examples() {
        assert_relative_eq!(fluctuation_ratio_theoretical(1, 0.5, 1.0, 2.0).unwrap(), 0.5 / 2f64.sqrt(), max_relative = 1e-14);
        assert_eq!(fluctuation_ratio_theoretical(3, 0.0, 1.0, 2.0).unwrap(), 0.0);
        let r1 = fluctuation_ratio_theoretical(1, 0.4, 2.0, 1.5).unwrap();
        let r100 = fluctuation_ratio_theoretical(100, 0.4, 2.0, 1.5).unwrap();
        assert_relative_eq!(r100 / r1, 0.1, max_relative = 1e-14);
        assert!(fluctuation_ratio_theoretical(1, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn t_star_examples() {
        assert_relative_eq!(t_star(2.0, 1.0, 8, 0.5, 1.0).unwrap(), 256.0, max_relative = 1e-14);
        assert_eq!(t_star(2.0, 1.0, 8, 0.0, 1.0).unwrap(), f64::INFINITY);
        let a = t_star(1.3, 2.0, 5, 0.3, 1.0).unwrap();
        let b = t_star(1.3, 2.0, 10, 0.3, 1.0).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-14);
    }

    #[test]
    fn error_metric_examples() {
        let t = AlphaTensor::from_fn(2, 1, |i, j, _| if i == j { 0.3 } else { 0.0 });
        assert_eq!(rel_error(&t, &t).unwrap(), 0.0);
        assert_relative_eq!(rel_error(&t.map(|x| 2.0 * x), &t).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        let single = AlphaTensor::from_fn(1, 1, |_, _, _| 0.4);
        assert_eq!(rel_error(&AlphaTensor::zeros(1, 1), &single).unwrap(), 1.0);
        assert!(rel_error(&t, &AlphaTensor::zeros(2, 1)).is_err());

        let eps = 0.01;
        assert_relative_eq!(abs_error(&t.map(|x| x + eps), &t).unwrap(), eps * 2.0, max_relative = 1e-12);
        let mut one = AlphaTensor::zeros(2, 1);
        one.set(1, 0, 0, -0.7);
        assert_relative_eq!(abs_error(&one, &AlphaTensor::zeros(2, 1)).unwrap(), 0.7);
    }

    #[test]
    fn bound_arithmetic() {
        assert_relative_eq!(error_bound_value(0.1, 2.0, 3.0), 0.6, max_relative = 1e-14);
    }

    #[test]
    fn apriori_examples() {
        let inputs = AprioriInputs { c_max_l1: 0.1, k_max_l1: 0.0, g_max: 1.0, nu_max: 0.0, lambda_min: 1.0, lambda_max: 1.0 };
        // d = 4, p = 1: dp = 4, C = identity
        let theta = Mat::zeros(4, 5);
        let c = vec![Mat::identity(5); 4];
        let b = apriori_bound(&inputs, &theta, &c, 1).unwrap();
        assert!(b.theta_norm.iter().all(|&v: &f64| (v - 0.2).abs() < 1e-14));
        let doubled = apriori_bound(&AprioriInputs { c_max_l1: 0.2, ..inputs.clone() }, &theta, &c, 1).unwrap();
        assert_relative_eq!(doubled.theta_norm[0], 2.0 * b.theta_norm[0], max_relative = 1e-14);
        let zero = apriori_bound(&AprioriInputs { c_max_l1: 0.0, ..inputs }, &theta, &c, 1).unwrap();
        assert_eq!(zero.theta_norm[0], 0.0);
        assert_eq!(zero.error_norm[0], 0.0);
    }

    #[test]
    fn cumulant_trivial_cases() {
        let ev = EventSequence::new(vec![0.1, 0.2, 0.5], vec![0, 0, 0], 1.0, 1).unwrap();
        let c = empirical_cumulant2(&ev, 0.0, 0.1).unwrap();
        assert_eq!(c.n_bins, 0);
        assert_eq!(c.c_max_l1, 0.0);
        assert!(empirical_cumulant2(&ev, 0.25, 0.1).is_err());
        let c = empirical_cumulant2(&ev, 0.5, 0.1).unwrap();
        // lags 0.1 (bin 1), 0.4 (bin 4), 0.3 (bin 2 or 3 depending on rounding)
        let total: f64 = c.values[0][0].iter().map(|v| (v + 9.0) * 0.1).sum();
        assert_relative_eq!(total, 3.0, max_relative = 1e-12);
    }
}
