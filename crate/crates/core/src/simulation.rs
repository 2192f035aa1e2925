//! Exact simulation of exponential-kernel Hawkes processes by Ogata thinning.
//!
//! The excitation felt by node `i` through basis slot `q` is kept as a single
//! number `E[i][q]` valid at a reference time; because all kernels in slot `q`
//! share the decay `beta_q`, the total intensity at any later time is
//! `sum(mu) + sum_q U_q exp(-beta_q (t - t_ref))` with `U_q = sum_i E[i][q]`.
//! Candidates therefore cost `O(p)` and accepted events `O(d p)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::params::HawkesParams;
use crate::scalar::Scalar;

/// Optional knobs for [`simulate_with`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimOptions<S> {
    /// Length of an initial stretch that is simulated and then discarded, so
    /// the retained window starts closer to stationarity. Zero by default.
    pub burnin: S,
}

/// Simulates `params` on `[0, horizon)` from an empty past.
pub fn simulate<S: Scalar>(params: &HawkesParams<S>, horizon: S, seed: u64) -> Result<EventSequence<S>> {
    simulate_with(params, horizon, seed, &SimOptions { burnin: S::zero() })
}

pub fn simulate_with<S: Scalar>(params: &HawkesParams<S>, horizon: S, seed: u64, opts: &SimOptions<S>) -> Result<EventSequence<S>> {
    Ok(run(params, horizon, seed, opts.burnin, false)?.0)
}

/// Like [`simulate`], also returning the intensity of the firing node at each
/// accepted event (left limit), as tracked by the recursive state.
pub fn simulate_traced<S: Scalar>(params: &HawkesParams<S>, horizon: S, seed: u64) -> Result<(EventSequence<S>, Vec<S>)> {
    run(params, horizon, seed, S::zero(), true)
}

fn check<S: Scalar>(params: &HawkesParams<S>, horizon: S, burnin: S) -> Result<()> {
    params.validate()?;
    if !(horizon > S::zero()) || !horizon.is_finite() {
        return Err(HawkesError::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    if !(burnin >= S::zero()) || !burnin.is_finite() {
        return Err(HawkesError::InvalidParameter(format!("burn-in must be nonnegative, got {burnin}")));
    }
    let norm = params.spectral_norm_phi();
    if !(norm < S::one()) {
        return Err(HawkesError::Unstable { phi_norm: norm.as_f64() });
    }
    Ok(())
}

fn run<S: Scalar>(params: &HawkesParams<S>, horizon: S, seed: u64, burnin: S, trace: bool) -> Result<(EventSequence<S>, Vec<S>)> {
    check(params, horizon, burnin)?;
    let d = params.d();
    let p = params.p();
    let betas = &params.basis.betas;
    let mu = &params.mu;
    let mu_total: S = mu.iter().copied().sum();
    // jump[j][i * p + q] = alpha^{ij}_q beta_q: what an event on j adds to E[i][q].
    let jump: Vec<Vec<S>> = (0..d)
        .map(|j| {
            let mut v = Vec::with_capacity(d * p);
            for i in 0..d {
                for q in 0..p {
                    v.push(params.alpha.get(i, j, q) * betas[q]);
                }
            }
            v
        })
        .collect();

    let end = horizon + burnin;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excitation = vec![S::zero(); d * p];
    let mut slot_total = vec![S::zero(); p];
    let mut t_ref = S::zero();
    let mut t = S::zero();
    let mut decay = vec![S::one(); p];
    let mut node_rates = vec![S::zero(); d];

    let mut times = Vec::new();
    let mut nodes = Vec::new();
    let mut intensities = Vec::new();

    // Intensity only decays between events, so its value just after the last
    // accepted event (or at the last rejected candidate) bounds it until the next one.
    let mut bound = mu_total;
    loop {
        if !(bound > S::zero()) {
            break;
        }
        let u: f64 = rng.gen();
        let wait = S::lit(-(1.0 - u).ln()) / bound;
        t = t + wait;
        if !(t < end) {
            break;
        }
        let mut total = mu_total;
        for q in 0..p {
            decay[q] = (-betas[q] * (t - t_ref)).exp();
            total = total + slot_total[q] * decay[q];
        }
        let v: f64 = rng.gen();
        if S::lit(v) * bound >= total {
            bound = total;
            continue;
        }

        // Accept: bring the per-node state to time t, then pick the node.
        let mut acc = S::zero();
        for i in 0..d {
            let mut rate = mu[i];
            for q in 0..p {
                let e = &mut excitation[i * p + q];
                *e = *e * decay[q];
                rate = rate + *e;
            }
            node_rates[i] = rate;
            acc = acc + rate;
        }
        t_ref = t;
        let target = S::lit(rng.gen::<f64>()) * acc;
        let mut node = d - 1;
        let mut run_sum = S::zero();
        for (i, &r) in node_rates.iter().enumerate() {
            run_sum = run_sum + r;
            if target < run_sum {
                node = i;
                break;
            }
        }

        if t >= burnin {
            let shifted = t - burnin;
            if shifted < horizon {
                times.push(shifted);
                nodes.push(node);
                if trace {
                    intensities.push(node_rates[node]);
                }
            }
        }

        slot_total.iter_mut().for_each(|s| *s = S::zero());
        for (k, (e, &jmp)) in excitation.iter_mut().zip(&jump[node]).enumerate() {
            *e = *e + jmp;
            slot_total[k % p] = slot_total[k % p] + *e;
        }
        bound = mu_total + slot_total.iter().copied().sum::<S>();
    }

    Ok((EventSequence::from_sorted_unchecked(times, nodes, horizon, d), intensities))
}
