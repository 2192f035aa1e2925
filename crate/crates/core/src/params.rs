//! Model parameters: baselines `mu`, interaction tensor `alpha`, and the
//! structured interaction matrices used by the experiments.

use serde::{Deserialize, Serialize};

use crate::error::{HawkesError, Result};
use crate::kernels::{AIndex, KernelBasis};
use crate::linalg::{self, Mat};
use crate::scalar::Scalar;

/// `d x d x p` tensor of kernel weights `alpha^{ij}_q`, stored `[i][j][q]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<Vec<S>>>", try_from = "Vec<Vec<Vec<S>>>", bound = "")]
pub struct AlphaTensor<S: Scalar> {
    d: usize,
    p: usize,
    data: Vec<S>,
}

impl<S: Scalar> AlphaTensor<S> {
    pub fn zeros(d: usize, p: usize) -> Self {
        Self { d, p, data: vec![S::zero(); d * d * p] }
    }

    pub fn from_fn(d: usize, p: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(d * d * p);
        for i in 0..d {
            for j in 0..d {
                for q in 0..p {
                    data.push(f(i, j, q));
                }
            }
        }
        Self { d, p, data }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, q: usize) -> S {
        self.data[(i * self.d + j) * self.p + q]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, q: usize, v: S) {
        self.data[(i * self.d + j) * self.p + q] = v;
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self { d: self.d, p: self.p, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `A^{ij} = sum_q alpha^{ij}_q`, the integrated kernel matrix.
    pub fn integrated(&self) -> Mat<S> {
        Mat::from_fn(self.d, self.d, |i, j| (0..self.p).map(|q| self.get(i, j, q)).sum())
    }
}

impl<S: Scalar> From<AlphaTensor<S>> for Vec<Vec<Vec<S>>> {
    fn from(t: AlphaTensor<S>) -> Self {
        (0..t.d).map(|i| (0..t.d).map(|j| (0..t.p).map(|q| t.get(i, j, q)).collect()).collect()).collect()
    }
}

impl<S: Scalar> TryFrom<Vec<Vec<Vec<S>>>> for AlphaTensor<S> {
    type Error = String;
    fn try_from(v: Vec<Vec<Vec<S>>>) -> std::result::Result<Self, String> {
        let d = v.len();
        let p = v.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if v.iter().any(|r| r.len() != d || r.iter().any(|c| c.len() != p)) {
            return Err(format!("alpha must be a {d} x {d} x p array"));
        }
        Ok(Self { d, p, data: v.into_iter().flatten().flatten().collect() })
    }
}

/// Baselines, interactions, and the basis they are expressed in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct HawkesParams<S: Scalar> {
    pub mu: Vec<S>,
    pub alpha: AlphaTensor<S>,
    pub basis: KernelBasis<S>,
}

impl<S: Scalar> HawkesParams<S> {
    pub fn new(mu: Vec<S>, alpha: AlphaTensor<S>, basis: KernelBasis<S>) -> Result<Self> {
        let params = Self { mu, alpha, basis };
        params.check_shapes()?;
        Ok(params)
    }

    /// Poisson model: `alpha = 0`.
    pub fn poisson(mu: Vec<S>, basis: KernelBasis<S>) -> Self {
        let alpha = AlphaTensor::zeros(mu.len(), basis.len());
        Self { mu, alpha, basis }
    }

    fn check_shapes(&self) -> Result<()> {
        self.basis.validate()?;
        if self.mu.is_empty() {
            return Err(HawkesError::InvalidParameter("need at least one node".into()));
        }
        if self.alpha.d() != self.mu.len() || self.alpha.p() != self.basis.len() {
            return Err(HawkesError::Shape(format!(
                "alpha is {0}x{0}x{1} but mu has {2} nodes and the basis {3} kernels",
                self.alpha.d(),
                self.alpha.p(),
                self.mu.len(),
                self.basis.len()
            )));
        }
        Ok(())
    }

    /// Shapes plus component-wise nonnegativity.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        if self.mu.iter().chain(self.alpha.as_slice()).any(|x| !(*x >= S::zero()) || !x.is_finite()) {
            return Err(HawkesError::InvalidParameter("mu and alpha must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn p(&self) -> usize {
        self.basis.len()
    }

    pub fn index(&self) -> AIndex {
        AIndex::new(self.d(), self.p())
    }

    /// Spectral norm of the integrated kernel matrix, `||Phi||_1`.
    pub fn spectral_norm_phi(&self) -> S {
        linalg::spectral_norm(&self.alpha.integrated())
    }

    /// Mean intensity `Lambda = (I - A)^{-1} mu` of the stationary process.
    pub fn stationary_intensity(&self) -> Result<Vec<S>> {
        let norm = self.spectral_norm_phi();
        if !(norm < S::one()) {
            return Err(HawkesError::Unstable { phi_norm: norm.as_f64() });
        }
        let d = self.d();
        let a = self.alpha.integrated();
        let m = Mat::from_fn(d, d, |i, j| if i == j { S::one() } else { S::zero() } - a[(i, j)]);
        linalg::lu_solve(&m, &self.mu).ok_or(HawkesError::Unstable { phi_norm: norm.as_f64() })
    }

    /// Flattened parameter vector `theta^i` of length `d p + 1`.
    pub fn theta_row(&self, i: usize) -> Vec<S> {
        let idx = self.index();
        let mut row = Vec::with_capacity(idx.dim());
        row.push(self.mu[i]);
        for j in 0..self.d() {
            for q in 0..self.p() {
                row.push(self.alpha.get(i, j, q));
            }
        }
        row
    }

    /// All `theta^i` stacked as a `d x (d p + 1)` matrix.
    pub fn theta(&self) -> Mat<S> {
        let dim = self.index().dim();
        let mut data = Vec::with_capacity(self.d() * dim);
        for i in 0..self.d() {
            data.extend(self.theta_row(i));
        }
        Mat::from_vec(self.d(), dim, data)
    }

    /// Inverse of [`theta`](Self::theta). Entries are taken as-is (no sign check).
    pub fn from_theta(theta: &Mat<S>, basis: KernelBasis<S>) -> Result<Self> {
        let d = theta.rows();
        let p = basis.len();
        let idx = AIndex::new(d, p);
        if theta.cols() != idx.dim() {
            return Err(HawkesError::Shape(format!("theta has {} columns, expected d p + 1 = {}", theta.cols(), idx.dim())));
        }
        let mu = (0..d).map(|i| theta[(i, 0)]).collect();
        let alpha = AlphaTensor::from_fn(d, p, |i, j, q| theta[(i, idx.index(j, q))]);
        Self::new(mu, alpha, basis)
    }
}

/// Sizes of `n_blocks` contiguous clusters covering `d` nodes: the first
/// `d mod n_blocks` clusters get `ceil(d / n_blocks)` nodes, the rest
/// `floor(d / n_blocks)`.
pub fn block_sizes(d: usize, n_blocks: usize) -> Vec<usize> {
    let base = d / n_blocks;
    let extra = d % n_blocks;
    (0..n_blocks).map(|b| base + usize::from(b < extra)).collect()
}

/// Cluster label of every node.
pub fn block_labels(d: usize, n_blocks: usize) -> Vec<usize> {
    block_sizes(d, n_blocks).into_iter().enumerate().flat_map(|(b, c)| std::iter::repeat_n(b, c)).collect()
}

fn check_block_args(d: usize, n_blocks: usize, norm: f64) -> Result<()> {
    if d == 0 || n_blocks == 0 || n_blocks > d {
        return Err(HawkesError::InvalidParameter(format!("need 1 <= n_blocks <= d, got n_blocks={n_blocks}, d={d}")));
    }
    if !(norm >= 0.0) {
        return Err(HawkesError::InvalidParameter(format!("norm must be nonnegative, got {norm}")));
    }
    if norm >= 1.0 {
        return Err(HawkesError::Unstable { phi_norm: norm });
    }
    Ok(())
}

/// Block-diagonal interactions on basis slot `p_slot`: inside a cluster of
/// size `c` every entry is `norm / c`, zero across clusters. The spectral
/// norm of the result is exactly `norm`.
pub fn make_block_matrix<S: Scalar>(d: usize, n_blocks: usize, norm: S, p: usize, p_slot: usize) -> Result<AlphaTensor<S>> {
    check_block_args(d, n_blocks, norm.as_f64())?;
    if p_slot >= p {
        return Err(HawkesError::IndexOutOfRange { what: "basis slot", index: p_slot, len: p });
    }
    let sizes = block_sizes(d, n_blocks);
    let labels = block_labels(d, n_blocks);
    Ok(AlphaTensor::from_fn(d, p, |i, j, q| {
        if q == p_slot && labels[i] == labels[j] {
            norm / S::from_usize_lossy(sizes[labels[i]])
        } else {
            S::zero()
        }
    }))
}

/// Per-slot connectivity pattern for structured interaction tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotPattern {
    /// Within-cluster entries.
    Blocks,
    /// Across-cluster entries (the complement of `Blocks`).
    Complement,
    /// No interactions on this slot.
    Empty,
}

/// Builds an interaction tensor where slot `q` follows `patterns[q]`, each
/// nonzero entry starting at `1 / c` (`c` the size of the target node's
/// cluster), then the whole tensor is rescaled so its `||Phi||_1` equals
/// `norm`. With a single `Blocks` slot this coincides with
/// [`make_block_matrix`].
pub fn structured_alpha<S: Scalar>(d: usize, n_blocks: usize, norm: S, patterns: &[SlotPattern]) -> Result<AlphaTensor<S>> {
    check_block_args(d, n_blocks, norm.as_f64())?;
    if patterns.is_empty() {
        return Err(HawkesError::InvalidParameter("need one slot pattern per basis kernel".into()));
    }
    let sizes = block_sizes(d, n_blocks);
    let labels = block_labels(d, n_blocks);
    let raw = AlphaTensor::from_fn(d, patterns.len(), |i, j, q| {
        let same = labels[i] == labels[j];
        let on = match patterns[q] {
            SlotPattern::Blocks => same,
            SlotPattern::Complement => !same,
            SlotPattern::Empty => false,
        };
        if on {
            S::one() / S::from_usize_lossy(sizes[labels[i]])
        } else {
            S::zero()
        }
    });
    let raw_norm = linalg::spectral_norm(&raw.integrated());
    if raw_norm == S::zero() {
        return Ok(raw);
    }
    let scale = norm / raw_norm;
    Ok(raw.map(|x| x * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn basis() -> KernelBasis<f64> {
        KernelBasis::exponential(vec![1.0]).unwrap()
    }

    #[test]
    fn spectral_norm_examples() {
        let mut a = AlphaTensor::zeros(1, 1);
        a.set(0, 0, 0, 0.3);
        let p = HawkesParams::new(vec![1.0], a, basis()).unwrap();
        assert_relative_eq!(p.spectral_norm_phi(), 0.3, epsilon = 1e-14);

        let a = make_block_matrix(4, 2, 0.5, 1, 0).unwrap();
        let p = HawkesParams::new(vec![1.0; 4], a, basis()).unwrap();
        assert_relative_eq!(p.spectral_norm_phi(), 0.5, epsilon = 1e-12);

        let p = HawkesParams::poisson(vec![1.0; 3], basis());
        assert_eq!(p.spectral_norm_phi(), 0.0);
    }

    #[test]
    fn block_matrix_examples() {
        let a = make_block_matrix(4, 2, 0.5, 1, 0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i / 2 == j / 2 { 0.25 } else { 0.0 };
                assert_eq!(a.get(i, j, 0), expected);
            }
        }
        let a = make_block_matrix(1, 1, 0.3, 1, 0).unwrap();
        assert_eq!(a.get(0, 0, 0), 0.3);

        let a = make_block_matrix(3, 2, 0.6, 1, 0).unwrap();
        assert_eq!(block_sizes(3, 2), vec![2, 1]);
        assert_relative_eq!(a.get(0, 1, 0), 0.3, epsilon = 1e-15);
        assert_relative_eq!(a.get(2, 2, 0), 0.6, epsilon = 1e-15);
        assert_eq!(a.get(0, 2, 0), 0.0);
        assert_relative_eq!(linalg::spectral_norm(&a.integrated()), 0.6, epsilon = 1e-12);

        assert!(matches!(make_block_matrix(4, 2, 1.0, 1, 0), Err(HawkesError::Unstable { .. })));
        assert!(make_block_matrix(2, 3, 0.5, 1, 0).is_err());
        assert!(make_block_matrix(4, 2, 0.5, 1, 1).is_err());
    }

    #[test]
    fn block_matrix_only_fills_requested_slot() {
        let a = make_block_matrix(4, 2, 0.4, 2, 1).unwrap();
        assert_eq!(a.get(0, 0, 0), 0.0);
        assert_eq!(a.get(0, 0, 1), 0.2);
    }

    #[test]
    fn structured_alpha_matches_block_matrix_and_scales() {
        let a = structured_alpha(6, 2, 0.3, &[SlotPattern::Blocks]).unwrap();
        let b = make_block_matrix(6, 2, 0.3, 1, 0).unwrap();
        assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y): (&f64, &f64)| (x - y).abs() < 1e-14));

        let c = structured_alpha(8, 2, 0.5, &[SlotPattern::Blocks, SlotPattern::Complement]).unwrap();
        assert_relative_eq!(linalg::spectral_norm(&c.integrated()), 0.5, epsilon = 1e-12);
        assert_relative_eq!(c.get(0, 1, 0), 0.0625, epsilon = 1e-12);
        assert_eq!(c.get(0, 1, 1), 0.0);
        assert_relative_eq!(c.get(0, 5, 1), 0.0625, epsilon = 1e-12);
        assert_eq!(c.get(0, 5, 0), 0.0);
    }

    #[test]
    fn stationary_intensity_examples() {
        for (norm, expected) in [(0.5, 2.0), (0.8, 5.0)] {
            for (d, nb) in [(1, 1), (4, 1), (6, 2)] {
                let a = make_block_matrix(d, nb, norm, 1, 0).unwrap();
                let p = HawkesParams::new(vec![1.0; d], a, basis()).unwrap();
                for l in p.stationary_intensity().unwrap() {
                    assert_relative_eq!(l, expected, epsilon = 1e-10);
                }
            }
        }
        let p = HawkesParams::poisson(vec![1.5, 0.5], basis());
        assert_eq!(p.stationary_intensity().unwrap(), vec![1.5, 0.5]);

        let mut a = AlphaTensor::zeros(1, 1);
        a.set(0, 0, 0, 1.2);
        let p = HawkesParams::new(vec![1.0], a, basis()).unwrap();
        let err = p.stationary_intensity().unwrap_err();
        assert!(err.to_string().contains("||Phi||_1"), "{err}");
    }

    #[test]
    fn theta_round_trip() {
        let b = KernelBasis::exponential(vec![1.0, 3.0]).unwrap();
        let a = AlphaTensor::from_fn(3, 2, |i, j, q| (i * 6 + j * 2 + q) as f64 * 0.01);
        let p = HawkesParams::new(vec![0.1, 0.2, 0.3], a, b.clone()).unwrap();
        let th = p.theta();
        assert_eq!(th.cols(), 7);
        assert_eq!(th[(1, 0)], 0.2);
        // theta^{1,(2,1)} = alpha^{1 2}_1
        assert_eq!(th[(1, p.index().index(2, 1))], p.alpha.get(1, 2, 1));
        assert_eq!(HawkesParams::from_theta(&th, b).unwrap(), p);
    }

    #[test]
    fn alpha_json_nested() {
        let a = make_block_matrix::<f64>(2, 1, 0.5, 1, 0).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, "[[[0.25],[0.25]],[[0.25],[0.25]]]");
        let back: AlphaTensor<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<AlphaTensor<f64>>("[[[0.1]],[[0.1],[0.2]]]").is_err());
    }
}
