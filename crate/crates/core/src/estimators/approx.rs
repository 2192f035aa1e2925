//! Perturbative mean-field solve around the uncorrelated (Poisson) point.
//!
//! Without correlations the statistics reduce to
//! `J_0 = (L L^T + D) / Lambda^i` with `L = (1, Lambda^{j_a})` and
//! `D = blockdiag(0, Lambda^j nu)`, whose inverse `C_0` is known in closed
//! form. Writing `J = J_0 + dJ`, the estimate is
//! `theta = Sigma + C (dk - dh)` with `Sigma = (Lambda^i, 0, ...)` and
//! `C = C_0 sum_n (-dJ C_0)^n`, which this module truncates at a chosen order.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean_field::symmetric_solve;
use super::{FitResult, Method};
use crate::aux_stats::AuxStats;
use crate::error::{HawkesError, Result};
use crate::kernels::{AIndex, KernelBasis};
use crate::linalg::{self, Cholesky, Mat};
use crate::scalar::Scalar;

/// Truncation of the Neumann series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxOrder {
    /// Keep terms `n = 0..=order`.
    Order(usize),
    /// Solve with the full `J` through `theta = Sigma + J^{-1} (dk - dh)` and
    /// report its distance to the direct solve as the residual.
    ExactIdentity,
}

impl Default for ApproxOrder {
    fn default() -> Self {
        ApproxOrder::Order(1)
    }
}

/// `J_0` for a target node with rate `lambda_i`, given all node rates.
pub fn build_j0<S: Scalar>(lambda_bar: &[S], lambda_i: S, nu: &Mat<S>) -> Mat<S> {
    let d = lambda_bar.len();
    let p = nu.rows();
    let idx = AIndex::new(d, p);
    let ext: Vec<S> = (0..idx.dim()).map(|a| idx.channel(a).map_or(S::one(), |(j, _)| lambda_bar[j])).collect();
    Mat::from_fn(idx.dim(), idx.dim(), |a, b| {
        let mut v = ext[a] * ext[b];
        if let (Some((ja, qa)), Some((jb, qb))) = (idx.channel(a), idx.channel(b)) {
            if ja == jb {
                v = v + lambda_bar[ja] * nu[(qa, qb)];
            }
        }
        v / lambda_i
    })
}

/// Closed-form inverse of [`build_j0`]. Needs every rate positive.
pub fn build_c0<S: Scalar>(lambda_bar: &[S], lambda_i: S, nu: &Mat<S>) -> Result<Mat<S>> {
    let d = lambda_bar.len();
    let p = nu.rows();
    let idx = AIndex::new(d, p);
    if let Some(j) = lambda_bar.iter().position(|&l| !(l > S::zero())) {
        return Err(HawkesError::EmptyNode { node: j });
    }
    let nu_inv = Cholesky::new(nu)
        .ok_or_else(|| HawkesError::InvalidParameter("kernel cross-integral matrix is not positive definite".into()))?
        .inverse();
    // Z^j = nu^{-1} / Lambda^j, y^j_q = -Lambda^j sum_q' Z^j_{qq'} = -sum_q' nu^{-1}_{qq'}
    let row_sums: Vec<S> = (0..p).map(|q| nu_inv.row(q).iter().copied().sum()).collect();
    let total: S = row_sums.iter().copied().sum();
    let mut corner = S::one();
    for &l in lambda_bar {
        corner = corner + l * total;
    }
    let mut c0 = Mat::zeros(idx.dim(), idx.dim());
    c0[(0, 0)] = corner * lambda_i;
    for j in 0..d {
        for q in 0..p {
            let a = idx.index(j, q);
            c0[(0, a)] = -row_sums[q] * lambda_i;
            c0[(a, 0)] = -row_sums[q] * lambda_i;
            for q2 in 0..p {
                c0[(a, idx.index(j, q2))] = nu_inv[(q, q2)] / lambda_bar[j] * lambda_i;
            }
        }
    }
    Ok(c0)
}

/// Mean-field fit through the perturbative expansion around `J_0`.
pub fn fit_mean_field_approx<S: Scalar>(aux: &AuxStats<S>, basis: &KernelBasis<S>, order: ApproxOrder) -> Result<FitResult<S>> {
    if basis.len() != aux.p {
        return Err(HawkesError::Shape(format!("basis has {} kernels, statistics were built with {}", basis.len(), aux.p)));
    }
    if let Some(&node) = aux.empty_nodes().first() {
        return Err(HawkesError::EmptyNode { node });
    }
    let start = Instant::now();
    let nu = basis.nu_matrix();
    let dim = aux.dim();
    let idx = aux.index();
    let rows: Vec<(Vec<S>, S, Option<Mat<S>>)> = (0..aux.d)
        .into_par_iter()
        .map(|i| {
            let li = aux.lambda_bar[i];
            let mut sigma = vec![S::zero(); dim];
            sigma[0] = li;
            // dk - dh, with k_0 = h_0 = (1, Lambda^{j_a})
            let mut r = vec![S::zero(); dim];
            for a in 1..dim {
                let (j, _) = idx.channel(a).expect("a >= 1");
                let base = aux.lambda_bar[j];
                r[a] = (aux.k[i][a] - base) - (aux.h[a] - base);
            }
            match order {
                ApproxOrder::ExactIdentity => {
                    let id = symmetric_solve(&aux.j[i], &r, i, true)?;
                    let theta: Vec<S> = sigma.iter().zip(&id.theta).map(|(&s, &c)| s + c).collect();
                    let direct = symmetric_solve(&aux.j[i], &aux.rhs(i), i, false)?;
                    let gap = theta.iter().zip(&direct.theta).fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
                    let cov = id.inverse.map(|c| c.scale(S::one() / aux.horizon));
                    Ok((theta, gap, cov))
                }
                ApproxOrder::Order(n) => {
                    let c0 = build_c0(&aux.lambda_bar, li, &nu)?;
                    let dj = aux.j[i].sub(&build_j0(&aux.lambda_bar, li, &nu));
                    // Exact for any J: the a = 0 column of dJ absorbs the
                    // difference between 2 dk and dk on streamed statistics.
                    let dj_sigma = dj.mat_vec(&sigma);
                    let two = S::lit(2.0);
                    let mut rhs = vec![S::zero(); dim];
                    for a in 1..dim {
                        let (j, _) = idx.channel(a).expect("a >= 1");
                        let base = aux.lambda_bar[j];
                        rhs[a] = two * (aux.k[i][a] - base) - (aux.h[a] - base);
                    }
                    rhs.iter_mut().zip(&dj_sigma).for_each(|(x, &v)| *x = *x - v);
                    let mut w = c0.mat_vec(&rhs);
                    let mut theta: Vec<S> = sigma.iter().zip(&w).map(|(&s, &v)| s + v).collect();
                    for _ in 0..n {
                        let v = dj.mat_vec(&w);
                        w = c0.mat_vec(&v).into_iter().map(|x| -x).collect();
                        theta.iter_mut().zip(&w).for_each(|(t, &x)| *t = *t + x);
                    }
                    let res: Vec<S> = aux.j[i].mat_vec(&theta).iter().zip(aux.rhs(i)).map(|(&a, b)| a - b).collect();
                    let scale = linalg::norm2(&aux.rhs(i));
                    let rel = if scale > S::zero() { linalg::norm2(&res) / scale } else { linalg::norm2(&res) };
                    Ok((theta, rel, None))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut theta = Mat::zeros(aux.d, dim);
    let mut residual = S::zero();
    let mut cov = Vec::new();
    for (i, (row, res, c)) in rows.into_iter().enumerate() {
        theta.as_mut_slice()[i * dim..(i + 1) * dim].copy_from_slice(&row);
        residual = residual.max(res);
        if let Some(c) = c {
            cov.push(c);
        }
    }
    let mut fit = FitResult::new(Method::MfApprox, theta, basis.clone());
    fit.residual = Some(residual);
    if cov.len() == aux.d {
        fit.covariance = Some(cov);
    }
    fit.wall_time.solve = start.elapsed().as_secs_f64();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_inverts_j0() {
        let nu = KernelBasis::exponential(vec![1.0, 2.5]).unwrap().nu_matrix();
        let rates = [0.7, 1.3, 2.0];
        let j0 = build_j0(&rates, 1.3, &nu);
        let c0 = build_c0(&rates, 1.3, &nu).unwrap();
        assert!(c0.matmul(&j0).max_abs_diff(&Mat::identity(7)) < 1e-10);
    }

    #[test]
    fn scalar_case_by_hand() {
        // d = p = 1: C_0 = Lambda_i [[1 + Lambda / nu, -1 / nu], [-1 / nu, 1 / (Lambda nu)]]
        let nu = Mat::from_vec(1, 1, vec![0.5]);
        let c0 = build_c0(&[2.0], 2.0, &nu).unwrap();
        let expect = Mat::from_vec(2, 2, vec![2.0 * 5.0, -4.0, -4.0, 2.0]);
        assert!(c0.max_abs_diff(&expect) < 1e-12);
    }
}
