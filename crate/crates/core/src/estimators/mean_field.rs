//! The mean-field estimator: one symmetric solve `J^i theta^i = 2 k^i - h`
//! per node, with covariance `C^i / T` where `C^i = (J^i)^{-1}`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FitResult, Method};
use crate::aux_stats::{self, AuxStats, ZeroEventPolicy};
use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::kernels::KernelBasis;
use crate::linalg::{self, Cholesky, Mat};
use crate::scalar::Scalar;

/// Mean-field fit settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfOptions {
    pub want_covariance: bool,
    /// Set negative entries of the estimate to zero after solving.
    pub clip_negative: bool,
    pub zero_events: ZeroEventPolicy,
}

impl Default for MfOptions {
    fn default() -> Self {
        Self { want_covariance: true, clip_negative: false, zero_events: ZeroEventPolicy::Fail }
    }
}

/// Solution of one node's symmetric system.
pub(crate) struct NodeSolve<S: Scalar> {
    pub theta: Vec<S>,
    pub inverse: Option<Mat<S>>,
    pub residual: S,
}

/// Solves `a x = b` for symmetric `a` by Cholesky plus one refinement
/// step. A matrix that is indefinite only at round-off level is shifted by
/// `1e-10 trace / n` (plus its negative eigenvalue, if any) and the event
/// logged; anything worse is reported as singular.
pub(crate) fn symmetric_solve<S: Scalar>(a: &Mat<S>, b: &[S], node: usize, want_inverse: bool) -> Result<NodeSolve<S>> {
    let n = a.rows();
    let chol = match Cholesky::new(a) {
        Some(c) => c,
        None => {
            let trace = a.trace();
            let ev = linalg::sym_eigenvalues(a);
            let min_ev = ev.first().copied().unwrap_or(S::nan());
            let tol = S::lit(1e-10) * trace.abs();
            if !(min_ev >= -tol) || !(trace > S::zero()) {
                return Err(HawkesError::Singular { node, min_eigenvalue: min_ev.as_f64() });
            }
            let shift = tol / S::from_usize_lossy(n) + (-min_ev).max(S::zero());
            log::warn!(
                "node {node}: system is near-singular (smallest eigenvalue {:e}); regularizing with shift {:e}",
                min_ev.as_f64(),
                shift.as_f64()
            );
            let mut reg = a.clone();
            reg.add_diagonal(shift);
            Cholesky::new(&reg).ok_or(HawkesError::Singular { node, min_eigenvalue: min_ev.as_f64() })?
        }
    };
    let mut x = chol.solve(b);
    let r: Vec<S> = a.mat_vec(&x).iter().zip(b).map(|(&ax, &bi)| bi - ax).collect();
    let dx = chol.solve(&r);
    x.iter_mut().zip(&dx).for_each(|(xi, &d)| *xi = *xi + d);
    let res: Vec<S> = a.mat_vec(&x).iter().zip(b).map(|(&ax, &bi)| ax - bi).collect();
    let scale = linalg::norm2(b);
    let residual = if scale > S::zero() { linalg::norm2(&res) / scale } else { linalg::norm2(&res) };
    if !x.iter().all(|v| v.is_finite()) {
        return Err(HawkesError::Singular { node, min_eigenvalue: f64::NAN });
    }
    Ok(NodeSolve { theta: x, inverse: want_inverse.then(|| chol.inverse()), residual })
}

/// Expands a solution over `active` channels back to the full `dim`.
pub(crate) fn expand<S: Scalar>(active: &[usize], dim: usize, part: &[S]) -> Vec<S> {
    let mut full = vec![S::zero(); dim];
    for (&a, &v) in active.iter().zip(part) {
        full[a] = v;
    }
    full
}

pub(crate) fn expand_mat<S: Scalar>(active: &[usize], dim: usize, part: &Mat<S>) -> Mat<S> {
    let mut full = Mat::zeros(dim, dim);
    for (r, &a) in active.iter().enumerate() {
        for (c, &b) in active.iter().enumerate() {
            full[(a, b)] = part[(r, c)];
        }
    }
    full
}

/// Runs the per-node solves of an [`AuxStats`] in parallel.
///
/// Nodes without events get NaN rows. Channels whose source node has no
/// events carry no information and are fixed at zero.
pub fn fit_mean_field<S: Scalar>(aux: &AuxStats<S>, basis: &KernelBasis<S>, opts: &MfOptions) -> Result<FitResult<S>> {
    if basis.len() != aux.p {
        return Err(HawkesError::Shape(format!("basis has {} kernels, statistics were built with {}", basis.len(), aux.p)));
    }
    let start = Instant::now();
    let dim = aux.dim();
    let active = aux.active_channels();
    let skipped = aux.empty_nodes();
    if !skipped.is_empty() && opts.zero_events == ZeroEventPolicy::Fail {
        return Err(HawkesError::EmptyNode { node: skipped[0] });
    }
    let solves: Vec<Option<NodeSolve<S>>> = (0..aux.d)
        .into_par_iter()
        .map(|i| {
            if aux.counts[i] == 0 {
                return Ok(None);
            }
            let j = aux.j[i].submatrix(&active);
            let rhs_full = aux.rhs(i);
            let rhs: Vec<S> = active.iter().map(|&a| rhs_full[a]).collect();
            symmetric_solve(&j, &rhs, i, opts.want_covariance).map(Some)
        })
        .collect::<Result<_>>()?;

    let mut theta = Mat::zeros(aux.d, dim);
    let mut covariance = opts.want_covariance.then(Vec::new);
    let mut residual = S::zero();
    let inv_t = S::one() / aux.horizon;
    for (i, solve) in solves.into_iter().enumerate() {
        match solve {
            Some(s) => {
                residual = residual.max(s.residual);
                let row = expand(&active, dim, &s.theta);
                theta.as_mut_slice()[i * dim..(i + 1) * dim].copy_from_slice(&row);
                if let (Some(cov), Some(inv)) = (covariance.as_mut(), s.inverse) {
                    cov.push(expand_mat(&active, dim, &inv.scale(inv_t)));
                }
            }
            None => {
                theta.as_mut_slice()[i * dim..(i + 1) * dim].iter_mut().for_each(|x| *x = S::nan());
                if let Some(cov) = covariance.as_mut() {
                    cov.push(Mat::from_fn(dim, dim, |_, _| S::nan()));
                }
            }
        }
    }
    let mut fit = FitResult::new(Method::Mf, theta, basis.clone());
    fit.covariance = covariance;
    fit.residual = Some(residual);
    fit.skipped_nodes = skipped;
    fit.wall_time.solve = start.elapsed().as_secs_f64();
    if opts.clip_negative {
        fit = fit.clipped();
    }
    Ok(fit)
}

/// Statistics pass plus solve, timing both phases.
pub fn fit_mean_field_events<S: Scalar>(
    events: &EventSequence<S>,
    basis: &KernelBasis<S>,
    opts: &MfOptions,
) -> Result<(FitResult<S>, AuxStats<S>)> {
    let start = Instant::now();
    let aux = aux_stats::compute_parallel(events, basis, opts.zero_events)?;
    let preprocess = start.elapsed().as_secs_f64();
    let mut fit = fit_mean_field(&aux, basis, opts)?;
    fit.wall_time.preprocess = preprocess;
    Ok((fit, aux))
}
