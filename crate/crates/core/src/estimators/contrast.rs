//! Least-squares contrast function.
//!
//! Minimizing `int (lambda^i_t)^2 dt - 2 int lambda^i_t dN^i_t` gives the
//! linear system `J' theta^i = Lambda^i k^i` with
//! `J'^{ab} = (1/T) int_0^T y^a_t y^b_t dt` (and `y^0 = 1`). The time
//! integral is taken by the midpoint rule on a uniform grid; the kernel
//! state at each midpoint is exact.

use std::time::Instant;

use rayon::prelude::*;

use super::mean_field::{expand, symmetric_solve};
use super::{FitResult, Method};
use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::kernels::{AIndex, KernelBasis};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Quadrature result: `J'` and the right-hand sides `Lambda^i k^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastStats<S> {
    pub jprime: Mat<S>,
    /// `(1/T) sum_{m on i} G^m` for each node.
    pub rhs: Vec<Vec<S>>,
    pub quad_step: S,
}

/// Default grid step: a tenth of the fastest kernel time scale.
pub fn default_quad_step<S: Scalar>(basis: &KernelBasis<S>) -> S {
    S::lit(0.1) / basis.max_beta()
}

pub fn contrast_matrix<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>, quad_step: S) -> Result<ContrastStats<S>> {
    basis.validate()?;
    if !(quad_step > S::zero()) || !quad_step.is_finite() {
        return Err(HawkesError::InvalidParameter(format!("quadrature step must be positive, got {quad_step}")));
    }
    let d = events.d();
    let p = basis.len();
    let dim = AIndex::new(d, p).dim();
    let betas = &basis.betas;
    let horizon = events.horizon();
    let times = events.times();
    let nodes = events.nodes();
    let n = times.len();

    let mut y = vec![S::zero(); dim];
    y[0] = S::one();
    let mut t_state = S::zero();
    let mut ymid = y.clone();
    let mut rhs = vec![vec![S::zero(); dim]; d];
    let mut upper = vec![S::zero(); dim * (dim + 1) / 2];

    let mut m = 0;
    // Advances the state through the tie group starting at `m`, crediting the
    // pre-group state to the right-hand side of every node in the group.
    let mut consume_group = |m: &mut usize, y: &mut Vec<S>, t_state: &mut S| {
        let t = times[*m];
        let mut end = *m + 1;
        while end < n && times[end] == t {
            end += 1;
        }
        if t > *t_state {
            for (q, &b) in betas.iter().enumerate() {
                let f = (-b * (t - *t_state)).exp();
                for j in 0..d {
                    y[1 + j * p + q] = y[1 + j * p + q] * f;
                }
            }
            *t_state = t;
        }
        for &u in &nodes[*m..end] {
            rhs[u].iter_mut().zip(y.iter()).for_each(|(r, &v)| *r = *r + v);
        }
        for &u in &nodes[*m..end] {
            for (q, &b) in betas.iter().enumerate() {
                y[1 + u * p + q] = y[1 + u * p + q] + b;
            }
        }
        *m = end;
    };

    let cells = (horizon / quad_step).ceil().to_usize().unwrap_or(0).max(1);
    let two = S::lit(2.0);
    let mut decay = vec![S::one(); p];
    for c in 0..cells {
        let lo = quad_step * S::from_usize_lossy(c);
        if lo >= horizon {
            break;
        }
        let hi = (lo + quad_step).min(horizon);
        let mid = (lo + hi) / two;
        let w = hi - lo;
        while m < n && times[m] < mid {
            consume_group(&mut m, &mut y, &mut t_state);
        }
        for (dq, &b) in decay.iter_mut().zip(betas) {
            *dq = (-b * (mid - t_state)).exp();
        }
        for a in 1..dim {
            ymid[a] = y[a] * decay[(a - 1) % p];
        }
        let mut off = 0;
        for a in 0..dim {
            let wa = ymid[a] * w;
            if wa != S::zero() {
                for (acc, &yb) in upper[off..off + dim - a].iter_mut().zip(&ymid[a..]) {
                    *acc = *acc + wa * yb;
                }
            }
            off += dim - a;
        }
    }
    while m < n {
        consume_group(&mut m, &mut y, &mut t_state);
    }

    let mut jprime = Mat::zeros(dim, dim);
    let mut off = 0;
    for a in 0..dim {
        for b in a..dim {
            let v = upper[off + b - a] / horizon;
            jprime[(a, b)] = v;
            jprime[(b, a)] = v;
        }
        off += dim - a;
    }
    rhs.iter_mut().flatten().for_each(|v| *v = *v / horizon);
    Ok(ContrastStats { jprime, rhs, quad_step })
}

/// Contrast-function fit. `quad_step` defaults to [`default_quad_step`].
pub fn fit_contrast<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>, quad_step: Option<S>) -> Result<FitResult<S>> {
    let start = Instant::now();
    let step = quad_step.unwrap_or_else(|| default_quad_step(basis));
    let stats = contrast_matrix(events, basis, step)?;
    let preprocess = start.elapsed().as_secs_f64();

    let d = events.d();
    let idx = AIndex::new(d, basis.len());
    let counts = events.counts();
    let active: Vec<usize> = (0..idx.dim()).filter(|&a| idx.channel(a).is_none_or(|(j, _)| counts[j] > 0)).collect();
    let jp = stats.jprime.submatrix(&active);
    let solves: Vec<_> = (0..d)
        .into_par_iter()
        .map(|i| {
            let rhs: Vec<S> = active.iter().map(|&a| stats.rhs[i][a]).collect();
            symmetric_solve(&jp, &rhs, i, false)
        })
        .collect::<Result<_>>()?;
    let dim = idx.dim();
    let mut theta = Mat::zeros(d, dim);
    let mut residual = S::zero();
    for (i, s) in solves.into_iter().enumerate() {
        theta.as_mut_slice()[i * dim..(i + 1) * dim].copy_from_slice(&expand(&active, dim, &s.theta));
        residual = residual.max(s.residual);
    }
    let mut fit = FitResult::new(Method::Cf, theta, basis.clone());
    fit.residual = Some(residual);
    fit.wall_time.preprocess = preprocess;
    fit.wall_time.solve = start.elapsed().as_secs_f64() - preprocess;
    Ok(fit)
}
