//! Maximum likelihood, by default over the nonnegative orthant.
//!
//! The objective splits into independent node terms, each minimized by a
//! projected quasi-Newton method: a dense BFGS model of the Hessian, a
//! two-metric projection (diagonal scaling on variables held at the bound,
//! the full model on the others) and a backtracking Armijo search along the
//! projected path. Node solvers advance in lockstep so that one global
//! iteration yields one point of the likelihood trajectory.
//!
//! Each node works with `f_i / T`, so the stopping tolerance applies to the
//! per-unit-time gradient and does not depend on the horizon.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::likelihood::LikelihoodData;
use super::{FitResult, Method, TracePoint};
use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::kernels::KernelBasis;
use crate::linalg::{Cholesky, Mat};
use crate::params::HawkesParams;
use crate::scalar::Scalar;

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MleOptions<S: Scalar> {
    /// Stop when the projected gradient of `f_i / T` is below this in max-norm
    /// for every node.
    pub tol: S,
    pub max_iter: usize,
    /// Keep every parameter at or above zero. Turning this off leaves only
    /// the requirement that the intensity be positive at every event.
    #[serde(default = "yes")]
    pub nonnegative: bool,
    /// Starting point; defaults to `mu = Lambda`, `alpha = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<HawkesParams<S>>,
}

impl<S: Scalar> Default for MleOptions<S> {
    fn default() -> Self {
        Self { tol: S::lit(1e-8), max_iter: 1000, nonnegative: true, init: None }
    }
}

fn yes() -> bool {
    true
}

struct NodeState<S: Scalar> {
    node: usize,
    x: Vec<S>,
    f: S,
    g: Vec<S>,
    b: Mat<S>,
    scaled: bool,
    iterations: usize,
    converged: bool,
    stalled: bool,
    bounded: bool,
}

fn project<S: Scalar>(v: &mut [S]) {
    v.iter_mut().for_each(|x| {
        if *x < S::zero() {
            *x = S::zero();
        }
    });
}

fn projected_grad_norm<S: Scalar>(x: &[S], g: &[S], bounded: bool) -> S {
    x.iter().zip(g).fold(S::zero(), |m, (&xi, &gi)| {
        let pg = if !bounded || xi > S::zero() { gi } else { gi.min(S::zero()) };
        m.max(pg.abs())
    })
}

struct Objective<'a, S: Scalar> {
    data: &'a LikelihoodData<S>,
    inv_t: S,
}

impl<S: Scalar> Objective<'_, S> {
    fn value(&self, i: usize, x: &[S]) -> S {
        self.data.node_value(i, x) * self.inv_t
    }

    fn value_grad(&self, i: usize, x: &[S], g: &mut [S]) -> S {
        let f = self.data.node_value_grad(i, x, g);
        g.iter_mut().for_each(|v| *v = *v * self.inv_t);
        f * self.inv_t
    }
}

impl<S: Scalar> NodeState<S> {
    fn new(obj: &Objective<'_, S>, node: usize, start: Vec<S>, bounded: bool) -> Self {
        let dim = start.len();
        let mut g = vec![S::zero(); dim];
        let f = obj.value_grad(node, &start, &mut g);
        Self { node, x: start, f, g, b: Mat::identity(dim), scaled: false, iterations: 0, converged: false, stalled: false, bounded }
    }

    fn project(&self, v: &mut [S]) {
        if self.bounded {
            project(v);
        }
    }

    fn done(&self) -> bool {
        self.converged || self.stalled
    }

    fn check(&mut self, tol: S) {
        if projected_grad_norm(&self.x, &self.g, self.bounded) <= tol {
            self.converged = true;
        }
    }

    /// Two-metric projected direction.
    fn direction(&self) -> Option<Vec<S>> {
        let dim = self.x.len();
        let mut trial = self.x.clone();
        trial.iter_mut().zip(&self.g).for_each(|(t, &g)| *t = *t - g);
        self.project(&mut trial);
        let gap = self.x.iter().zip(&trial).fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        let eps = gap.min(S::lit(1e-3));
        let active: Vec<bool> = (0..dim).map(|a| self.bounded && self.x[a] <= eps && self.g[a] > S::zero()).collect();
        let free: Vec<usize> = (0..dim).filter(|&a| !active[a]).collect();
        let mut d = vec![S::zero(); dim];
        if !free.is_empty() {
            let chol = Cholesky::new(&self.b.submatrix(&free))?;
            let gf: Vec<S> = free.iter().map(|&a| self.g[a]).collect();
            for (&a, v) in free.iter().zip(chol.solve(&gf)) {
                d[a] = -v;
            }
        }
        for a in (0..dim).filter(|&a| active[a]) {
            d[a] = -self.g[a] / self.b[(a, a)];
        }
        Some(d)
    }

    fn step(&mut self, obj: &Objective<'_, S>, tol: S) {
        self.check(tol);
        if self.done() {
            return;
        }
        self.iterations += 1;
        let dim = self.x.len();
        let d = match self.direction() {
            Some(d) => d,
            None => {
                self.reset_model();
                match self.direction() {
                    Some(d) => d,
                    None => {
                        self.stalled = true;
                        return;
                    }
                }
            }
        };
        let sigma = S::lit(1e-4);
        let slack = S::lit(10.0) * S::epsilon() * self.f.abs();
        let mut s = S::one();
        let mut accepted = None;
        for _ in 0..80 {
            let mut xn: Vec<S> = self.x.iter().zip(&d).map(|(&x, &di)| x + s * di).collect();
            self.project(&mut xn);
            let decrease: S = self.g.iter().zip(xn.iter().zip(&self.x)).map(|(&g, (&a, &b))| g * (a - b)).sum();
            let fn_ = obj.value(self.node, &xn);
            if fn_.is_finite() && fn_ <= self.f + sigma * decrease + slack {
                accepted = Some(xn);
                break;
            }
            s = s * S::lit(0.5);
        }
        let Some(xn) = accepted else {
            if self.scaled {
                self.reset_model();
            } else {
                self.stalled = true;
            }
            return;
        };
        let mut gn = vec![S::zero(); dim];
        let fn_ = obj.value_grad(self.node, &xn, &mut gn);
        let sv: Vec<S> = xn.iter().zip(&self.x).map(|(&a, &b)| a - b).collect();
        let yv: Vec<S> = gn.iter().zip(&self.g).map(|(&a, &b)| a - b).collect();
        self.update_model(&sv, &yv);
        let moved = sv.iter().any(|&v| v != S::zero());
        self.x = xn;
        self.f = fn_;
        self.g = gn;
        if !moved {
            self.check(tol);
            if !self.converged {
                self.stalled = true;
            }
        }
    }

    fn reset_model(&mut self) {
        self.b = Mat::identity(self.x.len());
        self.scaled = false;
    }

    fn update_model(&mut self, s: &[S], y: &[S]) {
        let sy: S = s.iter().zip(y).map(|(&a, &b)| a * b).sum();
        let ss: S = s.iter().map(|&a| a * a).sum();
        let yy: S = y.iter().map(|&a| a * a).sum();
        if !(sy > S::epsilon() * (ss * yy).sqrt()) {
            return;
        }
        if !self.scaled {
            self.b = Mat::identity(s.len()).scale(yy / sy);
            self.scaled = true;
        }
        let bs = self.b.mat_vec(s);
        let sbs: S = s.iter().zip(&bs).map(|(&a, &b)| a * b).sum();
        if !(sbs > S::zero()) {
            return;
        }
        let n = s.len();
        for r in 0..n {
            for c in 0..n {
                let v = self.b[(r, c)] - bs[r] * bs[c] / sbs + y[r] * y[c] / sy;
                self.b[(r, c)] = v;
            }
        }
    }
}

/// Maximum-likelihood fit from the events.
pub fn fit_mle<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>, opts: &MleOptions<S>) -> Result<FitResult<S>> {
    let start = Instant::now();
    let data = LikelihoodData::new(events, basis)?;
    fit_mle_data(&data, basis, opts, start)
}

/// Maximum-likelihood fit from precomputed regressors. `start` is the instant
/// the whole fit began; trajectory timestamps are measured from it.
pub fn fit_mle_data<S: Scalar>(
    data: &LikelihoodData<S>,
    basis: &KernelBasis<S>,
    opts: &MleOptions<S>,
    start: Instant,
) -> Result<FitResult<S>> {
    let precompute = start.elapsed().as_secs_f64();
    if basis.len() != data.p {
        return Err(HawkesError::Shape(format!("basis has {} kernels, regressors were built with {}", basis.len(), data.p)));
    }
    if let Some(node) = (0..data.d).find(|&i| data.count(i) == 0) {
        return Err(HawkesError::EmptyNode { node });
    }
    if let Some(init) = &opts.init {
        if init.d() != data.d || init.p() != data.p {
            return Err(HawkesError::Shape("initial parameters do not match the data".into()));
        }
    }
    let obj = Objective { data, inv_t: S::one() / data.horizon };
    let dim = data.dim();
    let mut states: Vec<NodeState<S>> = (0..data.d)
        .into_par_iter()
        .map(|i| {
            let rate = S::from_usize_lossy(data.count(i)) / data.horizon;
            let mut default = vec![S::zero(); dim];
            default[0] = rate;
            let x0 = match &opts.init {
                Some(p) => {
                    let mut x = p.theta_row(i);
                    if opts.nonnegative {
                        project(&mut x);
                    }
                    if obj.value(i, &x).is_finite() {
                        x
                    } else {
                        log::warn!("initial point infeasible for node {i}; starting from the Poisson fit");
                        default
                    }
                }
                None => default,
            };
            NodeState::new(&obj, i, x0, opts.nonnegative)
        })
        .collect();

    let total = |states: &[NodeState<S>]| states.iter().fold(S::zero(), |acc, s| acc + s.f) * data.horizon;
    let mut trajectory = vec![TracePoint { iteration: 0, seconds: start.elapsed().as_secs_f64(), nll: total(&states).as_f64() }];
    for it in 1..=opts.max_iter {
        if states.iter().all(NodeState::done) {
            break;
        }
        states.par_iter_mut().for_each(|s| s.step(&obj, opts.tol));
        if states.iter().all(NodeState::done) && states.iter().all(|s| s.iterations < it) {
            break;
        }
        trajectory.push(TracePoint { iteration: it, seconds: start.elapsed().as_secs_f64(), nll: total(&states).as_f64() });
    }
    states.iter_mut().for_each(|s| s.check(opts.tol));

    for s in states.iter().filter(|s| s.stalled && !s.converged) {
        log::warn!("node {}: line search stalled after {} iterations", s.node, s.iterations);
    }
    let converged = states.iter().all(|s| s.converged);
    let iterations = states.iter().map(|s| s.iterations).max().unwrap_or(0);
    let mut theta = Mat::zeros(data.d, dim);
    for s in &states {
        theta.as_mut_slice()[s.node * dim..(s.node + 1) * dim].copy_from_slice(&s.x);
    }
    let mut fit = FitResult::new(Method::Mle, theta, basis.clone());
    fit.nll = Some(total(&states));
    fit.converged = Some(converged);
    fit.iterations = Some(iterations);
    fit.trajectory = trajectory;
    fit.wall_time.preprocess = precompute;
    fit.wall_time.solve = start.elapsed().as_secs_f64() - precompute;
    Ok(fit)
}
