//! Independent reference implementations used by the integration tests.
//! Everything here is written from the definitions with direct O(n^2) or
//! O(n^3) sums, sharing no code with the library's streaming routines.

#![allow(dead_code)]

use hawkesmf::{Events64, Params64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Reference statistics, indexed like the library (`a = 0` is the baseline).
pub struct BruteAux {
    pub h: Vec<f64>,
    pub k: Vec<Vec<f64>>,
    pub j: Vec<Vec<Vec<f64>>>,
}

/// `y^a` at time `t`, summing every strictly earlier event of node `j_a`.
pub fn brute_state(times: &[f64], nodes: &[usize], d: usize, betas: &[f64], t: f64) -> Vec<f64> {
    let p = betas.len();
    let mut y = vec![0.0; d * p + 1];
    y[0] = 1.0;
    for (&s, &j) in times.iter().zip(nodes) {
        if s < t {
            for (q, &b) in betas.iter().enumerate() {
                y[1 + j * p + q] += b * (-b * (t - s)).exp();
            }
        }
    }
    y
}

pub fn brute_aux(ev: &Events64, betas: &[f64]) -> BruteAux {
    let d = ev.d();
    let p = betas.len();
    let dim = d * p + 1;
    let horizon = ev.horizon();
    let (times, nodes) = (ev.times(), ev.nodes());

    let mut h = vec![0.0; dim];
    h[0] = 1.0;
    for (&t, &j) in times.iter().zip(nodes) {
        for (q, &b) in betas.iter().enumerate() {
            h[1 + j * p + q] += (1.0 - (-b * (horizon - t)).exp()) / horizon;
        }
    }

    let mut k = vec![vec![0.0; dim]; d];
    let mut j = vec![vec![vec![0.0; dim]; dim]; d];
    let mut n = vec![0usize; d];
    for (&t, &i) in times.iter().zip(nodes) {
        let y = brute_state(times, nodes, d, betas, t);
        n[i] += 1;
        for a in 0..dim {
            k[i][a] += y[a];
            for b in 0..dim {
                j[i][a][b] += y[a] * y[b];
            }
        }
    }
    for i in 0..d {
        let ni = n[i] as f64;
        for a in 0..dim {
            k[i][a] /= ni;
            for b in 0..dim {
                j[i][a][b] *= horizon / (ni * ni);
            }
        }
    }
    BruteAux { h, k, j }
}

/// Random event sequence with every node populated. Times are rounded to a
/// coarse grid now and then so that ties occur.
pub fn random_events(rng: &mut ChaCha8Rng, d: usize, max_events: usize) -> Events64 {
    let n = rng.gen_range(d.max(2)..=max_events);
    let horizon = rng.gen_range(5.0..60.0);
    let coarse = rng.gen_bool(0.5);
    let mut ev: Vec<(f64, usize)> = (0..n)
        .map(|m| {
            let mut t: f64 = rng.gen_range(0.0..horizon);
            if coarse {
                t = (t * 4.0).floor() / 4.0;
            }
            let node = if m < d { m } else { rng.gen_range(0..d) };
            (t, node)
        })
        .collect();
    ev.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (times, nodes) = ev.into_iter().unzip();
    Events64::new(times, nodes, horizon, d).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Left-limit intensity of node `i` at time `t` by direct summation.
pub fn brute_intensity(params: &Params64, ev: &Events64, i: usize, t: f64) -> f64 {
    let mut lam = params.mu[i];
    for (&s, &j) in ev.times().iter().zip(ev.nodes()) {
        if s < t {
            for (q, &b) in params.basis.betas.iter().enumerate() {
                lam += params.alpha.get(i, j, q) * b * (-b * (t - s)).exp();
            }
        }
    }
    lam
}

/// Compensator `int_0^t lambda^i` by direct summation.
pub fn brute_compensator(params: &Params64, ev: &Events64, i: usize, t: f64) -> f64 {
    let mut c = params.mu[i] * t;
    for (&s, &j) in ev.times().iter().zip(ev.nodes()) {
        if s < t {
            for (q, &b) in params.basis.betas.iter().enumerate() {
                c += params.alpha.get(i, j, q) * (1.0 - (-b * (t - s)).exp());
            }
        }
    }
    c
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Largest relative deviation, with `floor` guarding tiny reference values.
pub fn max_rel_diff(got: &[f64], want: &[f64], floor: f64) -> f64 {
    got.iter().zip(want).map(|(g, w)| (g - w).abs() / w.abs().max(floor)).fold(0.0, f64::max)
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
pub fn ks_statistic(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Critical KS value at the 1% level (asymptotic).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
