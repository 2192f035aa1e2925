//! Negative log-likelihood and its gradient.
//!
//! The intensity of node `i` at its `m`-th event is `theta^i . G^m` where
//! `G^{m0} = 1` and `G^{ma}` is the value of the kernel `g_{q_a}` convolved
//! with the past events of node `j_a`. The likelihood splits into one term per
//! node,
//!
//! `f_i(theta^i) = T h . theta^i - sum_{m on i} log(theta^i . G^m)`,
//!
//! so all vectors `G^m` are computed once and every evaluation is a pass of
//! dot products.

use rayon::prelude::*;

use crate::aux_stats;
use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::kernels::{AIndex, KernelBasis};
use crate::linalg::Mat;
use crate::params::HawkesParams;
use crate::scalar::Scalar;

/// Precomputed per-event regressors.
#[derive(Clone, Debug)]
pub struct LikelihoodData<S> {
    pub d: usize,
    pub p: usize,
    pub horizon: S,
    pub h: Vec<S>,
    /// For node `i`, the vectors `G^m` of its events, row-major `n_i x dim`.
    g: Vec<Vec<S>>,
    /// Position of each of node `i`'s events in the full sequence.
    event_ids: Vec<Vec<usize>>,
}

impl<S: Scalar> LikelihoodData<S> {
    pub fn new(events: &EventSequence<S>, basis: &KernelBasis<S>) -> Result<Self> {
        basis.validate()?;
        let d = events.d();
        let p = basis.len();
        let dim = AIndex::new(d, p).dim();
        let betas = &basis.betas;
        let counts = events.counts();
        let mut g: Vec<Vec<S>> = counts.iter().map(|&n| Vec::with_capacity(n * dim)).collect();
        let mut event_ids: Vec<Vec<usize>> = counts.iter().map(|&n| Vec::with_capacity(n)).collect();
        let times = events.times();
        let nodes = events.nodes();
        let mut y = vec![S::zero(); d * p];
        let mut decay = vec![S::one(); p];
        let mut t_prev = S::zero();
        let mut m = 0;
        while m < times.len() {
            let t = times[m];
            let mut end = m + 1;
            while end < times.len() && times[end] == t {
                end += 1;
            }
            if t > t_prev {
                for (dq, &b) in decay.iter_mut().zip(betas) {
                    *dq = (-b * (t - t_prev)).exp();
                }
                for (k, v) in y.iter_mut().enumerate() {
                    *v = *v * decay[k % p];
                }
                t_prev = t;
            }
            for (e, &u) in nodes[m..end].iter().enumerate() {
                g[u].push(S::one());
                g[u].extend_from_slice(&y);
                event_ids[u].push(m + e);
            }
            for &u in &nodes[m..end] {
                for (q, &b) in betas.iter().enumerate() {
                    y[u * p + q] = y[u * p + q] + b;
                }
            }
            m = end;
        }
        let h = aux_stats::compute_h(events, basis);
        Ok(Self { d, p, horizon: events.horizon(), h, g, event_ids })
    }

    pub fn dim(&self) -> usize {
        self.d * self.p + 1
    }

    pub fn count(&self, i: usize) -> usize {
        self.event_ids[i].len()
    }

    /// `G^m` rows of node `i`.
    pub fn regressors(&self, i: usize) -> impl Iterator<Item = &[S]> {
        self.g[i].chunks_exact(self.dim())
    }

    /// `f_i(x)`; `+inf` if some intensity is not positive.
    pub fn node_value(&self, i: usize, x: &[S]) -> S {
        let mut log_sum = Neumaier::default();
        for row in self.regressors(i) {
            let lam = dot(row, x);
            if !(lam > S::zero()) {
                return S::infinity();
            }
            log_sum.add(lam.ln());
        }
        self.horizon * dot(&self.h, x) - log_sum.total()
    }

    /// `f_i(x)` and its gradient, written into `grad`.
    pub fn node_value_grad(&self, i: usize, x: &[S], grad: &mut [S]) -> S {
        let dim = self.dim();
        debug_assert_eq!(grad.len(), dim);
        grad.iter_mut().zip(&self.h).for_each(|(g, &h)| *g = self.horizon * h);
        let mut log_sum = Neumaier::default();
        for row in self.regressors(i) {
            let lam = dot(row, x);
            if !(lam > S::zero()) {
                grad.iter_mut().for_each(|g| *g = S::nan());
                return S::infinity();
            }
            log_sum.add(lam.ln());
            let w = S::one() / lam;
            for (g, &r) in grad.iter_mut().zip(row) {
                *g = *g - r * w;
            }
        }
        self.horizon * dot(&self.h, x) - log_sum.total()
    }

    /// First event of node `i` whose intensity under `x` is not positive.
    pub fn first_nonpositive(&self, i: usize, x: &[S]) -> Option<usize> {
        self.regressors(i).zip(&self.event_ids[i]).find(|(row, _)| !(dot(row, x) > S::zero())).map(|(_, &m)| m)
    }

    /// Total negative log-likelihood of a `d x dim` parameter matrix. Node
    /// terms are computed in parallel and summed in node order.
    pub fn nll(&self, theta: &Mat<S>) -> S {
        let parts: Vec<S> = (0..self.d).into_par_iter().map(|i| self.node_value(i, theta.row(i))).collect();
        let total = parts.iter().copied().fold(S::zero(), |a, b| a + b);
        if !total.is_finite() {
            for i in 0..self.d {
                if let Some(m) = self.first_nonpositive(i, theta.row(i)) {
                    log::warn!("intensity of node {i} is not positive at event {m}; likelihood is zero");
                    break;
                }
            }
        }
        total
    }

    pub fn gradient(&self, theta: &Mat<S>) -> Mat<S> {
        let dim = self.dim();
        let rows: Vec<Vec<S>> = (0..self.d)
            .into_par_iter()
            .map(|i| {
                let mut g = vec![S::zero(); dim];
                self.node_value_grad(i, theta.row(i), &mut g);
                g
            })
            .collect();
        Mat::from_vec(self.d, dim, rows.concat())
    }
}

/// Compensated running sum; the log terms number in the hundreds of
/// thousands and the optimizer compares values that differ in the last
/// digits.
struct Neumaier<S> {
    sum: S,
    comp: S,
}

impl<S: Scalar> Default for Neumaier<S> {
    fn default() -> Self {
        Self { sum: S::zero(), comp: S::zero() }
    }
}

impl<S: Scalar> Neumaier<S> {
    #[inline]
    fn add(&mut self, v: S) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp = self.comp + ((self.sum - t) + v);
        } else {
            self.comp = self.comp + ((v - t) + self.sum);
        }
        self.sum = t;
    }

    fn total(&self) -> S {
        self.sum + self.comp
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

fn check_shapes<S: Scalar>(params: &HawkesParams<S>, events: &EventSequence<S>) -> Result<()> {
    if params.d() != events.d() {
        return Err(HawkesError::Shape(format!("parameters have {} nodes, events {}", params.d(), events.d())));
    }
    Ok(())
}

/// `-log L(params | events)`; `+inf` (with a warning naming the event) when
/// an observed event has zero intensity.
pub fn neg_log_likelihood<S: Scalar>(params: &HawkesParams<S>, events: &EventSequence<S>) -> Result<S> {
    check_shapes(params, events)?;
    let data = LikelihoodData::new(events, &params.basis)?;
    Ok(data.nll(&params.theta()))
}

/// Gradient of [`neg_log_likelihood`] with respect to `theta`, as a
/// `d x (d p + 1)` matrix.
pub fn nll_gradient<S: Scalar>(params: &HawkesParams<S>, events: &EventSequence<S>) -> Result<Mat<S>> {
    check_shapes(params, events)?;
    let data = LikelihoodData::new(events, &params.basis)?;
    Ok(data.gradient(&params.theta()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_closed_form() {
        let basis = KernelBasis::exponential(vec![1.0]).unwrap();
        let ev = EventSequence::new(vec![0.5, 1.0, 4.0, 7.5], vec![0; 4], 10.0, 1).unwrap();
        let mu = 0.3;
        let params = HawkesParams::poisson(vec![mu], basis);
        let nll = neg_log_likelihood(&params, &ev).unwrap();
        assert_relative_eq!(nll, mu * 10.0 - 4.0 * f64::ln(mu), max_relative = 1e-14);
        let grad = nll_gradient(&params, &ev).unwrap();
        assert_relative_eq!(grad[(0, 0)], 10.0 - 4.0 / mu, max_relative = 1e-14);
    }

    #[test]
    fn zero_intensity_is_infinite() {
        let basis = KernelBasis::exponential(vec![1.0]).unwrap();
        let ev = EventSequence::new(vec![0.5], vec![0], 10.0, 1).unwrap();
        let params = HawkesParams::poisson(vec![0.0], basis);
        assert_eq!(neg_log_likelihood(&params, &ev).unwrap(), f64::INFINITY);
    }
}
