//! Auxiliary statistics `h`, `k^i`, `J^i` streamed from an event sequence.
//!
//! With `y^a_t = sum_{t_m < t, u_m = j_a} g_{q_a}(t - t_m)` (and `y^0 = 1`):
//!
//! * `h^a = (1/T) int_0^T y^a_t dt`, computed exactly from the kernel tails,
//! * `k^{ia} = (1/N^i) sum_{m on i} y^a_{t_m}`,
//! * `J^{iab} = (T / (N^i)^2) sum_{m on i} y^a_{t_m} y^b_{t_m}`.
//!
//! The baseline border follows from substituting the deterministic channel:
//! `h^0 = 1`, `k^{i0} = 1`, `J^{i00} = 1 / Lambda^i` and
//! `J^{i0a} = k^{ia} / Lambda^i`.
//!
//! For exponential kernels `y` is advanced exactly by
//! `y <- exp(-beta dt) (y + beta [event])`. Kernels without an exponential
//! rate go through a windowed direct sum truncated where the kernel drops
//! below the basis cutoff epsilon. Events sharing a timestamp never see
//! each other, since `g(0) = 0`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::events::EventSequence;
use crate::kernels::{AIndex, Kernel, KernelBasis};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// What to do with nodes that have no events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroEventPolicy {
    #[default]
    Fail,
    /// Keep going; the node's `k` and `J` are filled with NaN and estimators
    /// leave it out.
    Skip,
}

/// The statistics of one event sequence under one kernel basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AuxStats<S: Scalar> {
    pub d: usize,
    pub p: usize,
    pub horizon: S,
    /// Decay rate of each basis kernel (NaN for kernels without one).
    pub betas: Vec<S>,
    pub counts: Vec<usize>,
    pub lambda_bar: Vec<S>,
    pub h: Vec<S>,
    pub k: Vec<Vec<S>>,
    pub j: Vec<Mat<S>>,
}

impl<S: Scalar> AuxStats<S> {
    pub fn index(&self) -> AIndex {
        AIndex::new(self.d, self.p)
    }

    pub fn dim(&self) -> usize {
        self.index().dim()
    }

    /// Nodes without events.
    pub fn empty_nodes(&self) -> Vec<usize> {
        (0..self.d).filter(|&i| self.counts[i] == 0).collect()
    }

    /// Channels `a` whose source node has at least one event (always
    /// includes `a = 0`). Other channels have identically zero statistics.
    pub fn active_channels(&self) -> Vec<usize> {
        let idx = self.index();
        (0..idx.dim()).filter(|&a| idx.channel(a).is_none_or(|(j, _)| self.counts[j] > 0)).collect()
    }

    /// Extended rate vector `(1, Lambda^{j_1}, ..., Lambda^{j_dp})`.
    pub fn lambda_bar_ext(&self) -> Vec<S> {
        let idx = self.index();
        (0..idx.dim()).map(|a| idx.channel(a).map_or(S::one(), |(j, _)| self.lambda_bar[j])).collect()
    }

    /// Right-hand side `2 k^i - h` of the mean-field system.
    pub fn rhs(&self, i: usize) -> Vec<S> {
        let two = S::lit(2.0);
        self.k[i].iter().zip(&self.h).map(|(&k, &h)| two * k - h).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Streams `events` once under an exponential basis.
pub fn compute<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>, policy: ZeroEventPolicy) -> Result<AuxStats<S>> {
    basis.validate()?;
    let counts = check_counts(events, policy)?;
    let all: Vec<usize> = (0..events.d()).collect();
    let sums = accumulate_exp(events, &basis.betas, &all);
    Ok(finish(events, basis.betas.clone(), counts, compute_h(events, basis), sums))
}

/// Same result as [`compute`], bit for bit, with target nodes split across
/// the rayon pool. Every worker replays the shared `y` stream and only
/// accumulates its own nodes.
pub fn compute_parallel<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>, policy: ZeroEventPolicy) -> Result<AuxStats<S>> {
    basis.validate()?;
    let counts = check_counts(events, policy)?;
    let d = events.d();
    let workers = rayon::current_num_threads().clamp(1, d);
    let chunk = d.div_ceil(workers);
    let groups: Vec<Vec<usize>> = (0..d).collect::<Vec<_>>().chunks(chunk).map(<[usize]>::to_vec).collect();
    let parts: Vec<NodeSums<S>> = groups.par_iter().map(|targets| accumulate_exp(events, &basis.betas, targets)).collect();
    let mut sums = NodeSums::new(d, basis.len());
    for (targets, part) in groups.iter().zip(parts) {
        for &i in targets {
            sums.k[i] = part.k[i].clone();
            sums.yy[i] = part.yy[i].clone();
        }
    }
    Ok(finish(events, basis.betas.clone(), counts, compute_h(events, basis), sums))
}

/// Generic route for arbitrary causal kernels: past events are kept in a
/// window of length `cutoff_time(eps)` per kernel and summed directly.
pub fn compute_generic<S: Scalar>(
    events: &EventSequence<S>,
    kernels: &[&dyn Kernel<S>],
    cutoff_epsilon: S,
    policy: ZeroEventPolicy,
) -> Result<AuxStats<S>> {
    if kernels.is_empty() {
        return Err(HawkesError::InvalidParameter("kernel basis needs at least one kernel".into()));
    }
    let counts = check_counts(events, policy)?;
    let d = events.d();
    let p = kernels.len();
    let idx = AIndex::new(d, p);
    let horizon = events.horizon();
    let windows: Vec<S> = kernels.iter().map(|k| k.cutoff_time(cutoff_epsilon)).collect();
    let window = windows.iter().fold(S::zero(), |m, &w| m.max(w));

    let mut h = vec![S::zero(); idx.dim()];
    h[0] = S::one();
    for (t, u) in events.iter() {
        for (q, k) in kernels.iter().enumerate() {
            let a = idx.index(u, q);
            h[a] = h[a] + k.integral(horizon - t);
        }
    }
    h.iter_mut().skip(1).for_each(|x| *x = *x / horizon);

    let mut sums = NodeSums::new(d, p);
    let mut past: VecDeque<(S, usize)> = VecDeque::new();
    let mut y = vec![S::zero(); d * p];
    for (t, u) in events.iter() {
        while past.front().is_some_and(|&(s, _)| t - s > window) {
            past.pop_front();
        }
        y.iter_mut().for_each(|v| *v = S::zero());
        for &(s, j) in &past {
            let lag = t - s;
            for (q, k) in kernels.iter().enumerate() {
                if lag <= windows[q] {
                    y[j * p + q] = y[j * p + q] + k.eval(lag);
                }
            }
        }
        sums.add(u, &y);
        past.push_back((t, u));
    }
    let betas = kernels.iter().map(|k| k.exp_rate().unwrap_or(S::nan())).collect();
    Ok(finish(events, betas, counts, h, sums))
}

fn check_counts<S: Scalar>(events: &EventSequence<S>, policy: ZeroEventPolicy) -> Result<Vec<usize>> {
    let counts = events.counts();
    if policy == ZeroEventPolicy::Fail {
        if let Some(node) = counts.iter().position(|&n| n == 0) {
            return Err(HawkesError::EmptyNode { node });
        }
    }
    for (node, _) in counts.iter().enumerate().filter(|(_, &n)| n == 0) {
        log::warn!("node {node} has no events and is skipped");
    }
    Ok(counts)
}

/// The vector `h` under an exponential basis (exact tail integrals).
pub fn compute_h<S: Scalar>(events: &EventSequence<S>, basis: &KernelBasis<S>) -> Vec<S> {
    let idx = AIndex::new(events.d(), basis.len());
    let horizon = events.horizon();
    let mut h = vec![S::zero(); idx.dim()];
    for (t, u) in events.iter() {
        for (q, &b) in basis.betas.iter().enumerate() {
            let a = idx.index(u, q);
            h[a] = h[a] + (S::one() - (-b * (horizon - t)).exp());
        }
    }
    h[0] = S::one();
    h.iter_mut().skip(1).for_each(|x| *x = *x / horizon);
    h
}

/// Raw per-node sums of `y` and of the upper triangle of `y y^T`.
struct NodeSums<S> {
    dp: usize,
    k: Vec<Vec<S>>,
    yy: Vec<Vec<S>>,
}

impl<S: Scalar> NodeSums<S> {
    fn new(d: usize, p: usize) -> Self {
        let dp = d * p;
        Self { dp, k: vec![Vec::new(); d], yy: vec![Vec::new(); d] }
    }

    #[inline]
    fn add(&mut self, i: usize, y: &[S]) {
        let dp = self.dp;
        if self.k[i].is_empty() {
            self.k[i] = vec![S::zero(); dp];
            self.yy[i] = vec![S::zero(); dp * (dp + 1) / 2];
        }
        for (acc, &v) in self.k[i].iter_mut().zip(y) {
            *acc = *acc + v;
        }
        let yy = &mut self.yy[i];
        let mut off = 0;
        for a in 0..dp {
            let ya = y[a];
            if ya != S::zero() {
                for (acc, &yb) in yy[off..off + dp - a].iter_mut().zip(&y[a..]) {
                    *acc = *acc + ya * yb;
                }
            }
            off += dp - a;
        }
    }
}

fn accumulate_exp<S: Scalar>(events: &EventSequence<S>, betas: &[S], targets: &[usize]) -> NodeSums<S> {
    let d = events.d();
    let p = betas.len();
    let mut wanted = vec![false; d];
    targets.iter().for_each(|&i| wanted[i] = true);
    let mut sums = NodeSums::new(d, p);
    let mut y = vec![S::zero(); d * p];
    let mut decay = vec![S::one(); p];
    let times = events.times();
    let nodes = events.nodes();
    let n = times.len();
    let mut t_prev = S::zero();
    let mut m = 0;
    while m < n {
        let t = times[m];
        let mut end = m + 1;
        while end < n && times[end] == t {
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
        for &u in &nodes[m..end] {
            if wanted[u] {
                sums.add(u, &y);
            }
        }
        for &u in &nodes[m..end] {
            for (q, &b) in betas.iter().enumerate() {
                y[u * p + q] = y[u * p + q] + b;
            }
        }
        m = end;
    }
    sums
}

fn finish<S: Scalar>(events: &EventSequence<S>, betas: Vec<S>, counts: Vec<usize>, h: Vec<S>, sums: NodeSums<S>) -> AuxStats<S> {
    let d = events.d();
    let p = betas.len();
    let idx = AIndex::new(d, p);
    let dim = idx.dim();
    let dp = dim - 1;
    let horizon = events.horizon();
    let lambda_bar = events.lambda_bar();
    let mut k = Vec::with_capacity(d);
    let mut j = Vec::with_capacity(d);
    for i in 0..d {
        if counts[i] == 0 {
            k.push(vec![S::nan(); dim]);
            j.push(Mat::from_fn(dim, dim, |_, _| S::nan()));
            continue;
        }
        let n = S::from_usize_lossy(counts[i]);
        let scale = horizon / (n * n);
        let mut ki = vec![S::one(); dim];
        for a in 1..dim {
            ki[a] = sums.k[i][a - 1] / n;
        }
        let mut ji = Mat::zeros(dim, dim);
        ji[(0, 0)] = S::one() / lambda_bar[i];
        for a in 1..dim {
            let v = ki[a] / lambda_bar[i];
            ji[(0, a)] = v;
            ji[(a, 0)] = v;
        }
        let mut off = 0;
        for a in 0..dp {
            for b in a..dp {
                let v = sums.yy[i][off + b - a] * scale;
                ji[(a + 1, b + 1)] = v;
                ji[(b + 1, a + 1)] = v;
            }
            off += dp - a;
        }
        k.push(ki);
        j.push(ji);
    }
    AuxStats { d, p, horizon, betas, counts, lambda_bar, h, k, j }
}

const MAGIC: &[u8; 8] = b"HMFAUX\0\0";
const VERSION: u32 = 1;

/// Writes the binary dump: an 8-byte magic, a `u32` version, `u32` `d` and
/// `p`, then little-endian `f64` horizon, betas, rates, `u64` counts, `h`,
/// every `k^i`, and every `J^i` in row-major order.
pub fn write_binary<S: Scalar, W: Write>(aux: &AuxStats<S>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(aux.d).map_err(|_| HawkesError::Shape("d too large".into()))?.to_le_bytes())?;
    w.write_all(&u32::try_from(aux.p).map_err(|_| HawkesError::Shape("p too large".into()))?.to_le_bytes())?;
    let mut put = |x: S| w.write_all(&x.as_f64().to_le_bytes());
    put(aux.horizon)?;
    aux.betas.iter().try_for_each(|&x| put(x))?;
    aux.lambda_bar.iter().try_for_each(|&x| put(x))?;
    for &c in &aux.counts {
        w.write_all(&(c as u64).to_le_bytes())?;
    }
    let mut put = |x: S| w.write_all(&x.as_f64().to_le_bytes());
    aux.h.iter().try_for_each(|&x| put(x))?;
    aux.k.iter().flatten().try_for_each(|&x| put(x))?;
    aux.j.iter().flat_map(|m| m.as_slice()).try_for_each(|&x| put(x))?;
    w.flush()?;
    Ok(())
}

pub fn read_binary<S: Scalar, R: Read>(reader: R) -> Result<AuxStats<S>> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(HawkesError::Format("not an auxiliary-statistics dump".into()));
    }
    let mut u32_buf = [0u8; 4];
    let mut get_u32 = |r: &mut BufReader<R>| -> Result<u32> {
        r.read_exact(&mut u32_buf)?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(HawkesError::Format(format!("unsupported dump version {version}")));
    }
    let d = get_u32(&mut r)? as usize;
    let p = get_u32(&mut r)? as usize;
    if d == 0 || p == 0 {
        return Err(HawkesError::Format("dump has empty dimensions".into()));
    }
    let dim = d * p + 1;
    let mut buf = [0u8; 8];
    let mut get = |r: &mut BufReader<R>, n: usize| -> Result<Vec<S>> {
        (0..n)
            .map(|_| {
                r.read_exact(&mut buf)?;
                Ok(S::lit(f64::from_le_bytes(buf)))
            })
            .collect()
    };
    let horizon = get(&mut r, 1)?[0];
    let betas = get(&mut r, p)?;
    let lambda_bar = get(&mut r, d)?;
    let mut counts = Vec::with_capacity(d);
    for _ in 0..d {
        let mut c = [0u8; 8];
        r.read_exact(&mut c)?;
        counts.push(u64::from_le_bytes(c) as usize);
    }
    let h = get(&mut r, dim)?;
    let k = (0..d).map(|_| get(&mut r, dim)).collect::<Result<Vec<_>>>()?;
    let j = (0..d).map(|_| get(&mut r, dim * dim).map(|v| Mat::from_vec(dim, dim, v))).collect::<Result<Vec<_>>>()?;
    Ok(AuxStats { d, p, horizon, betas, counts, lambda_bar, h, k, j })
}

pub fn write_binary_file<S: Scalar>(aux: &AuxStats<S>, path: impl AsRef<Path>) -> Result<()> {
    write_binary(aux, File::create(path)?)
}

pub fn read_binary_file<S: Scalar>(path: impl AsRef<Path>) -> Result<AuxStats<S>> {
    read_binary(File::open(path)?)
}
