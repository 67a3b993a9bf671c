//! Tensor-train (matrix product) vectors and matrices, and the TT linear
//! layer with exact reverse-mode gradients.
//!
//! A TT matrix factors a `(prod J_k) x (prod I_k)` map into a chain of 4-way
//! cores `W_k` indexed `(r_k, i_k, j_k, r_{k+1})`; the entry of the full
//! matrix at multi-index `((j_1..j_K), (i_1..i_K))` is the ordered product of
//! the `r_k x r_{k+1}` slices `W_k(i_k, j_k)`. Boundary ranks are 1 so the
//! product is a scalar.
//!
//! Index conventions, fixed crate-wide:
//! * multi-indices flatten row-major with the LAST index fastest, for both
//!   input `(i_1..i_K)` and output `(j_1..j_K)`;
//! * core data is stored row-major in `(r_k, i_k, j_k, r_{k+1})` order;
//! * TT-vector core data is stored row-major in `(r_k, i_k, r_{k+1})` order.

use crate::linalg;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TtError {
    #[error("invalid TT shape: {0}")]
    InvalidShape(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank {rank} exceeds unfolding dimension {limit} at mode {mode}")]
    RankTooLarge {
        mode: usize,
        rank: usize,
        limit: usize,
    },
    #[error("non-finite entry in core {0}")]
    NonFinite(usize),
}

/// Shape of a TT matrix: per-mode input/output dims and the rank chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TtShape {
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    /// `K + 1` ranks with `ranks[0] == ranks[K] == 1`.
    pub ranks: Vec<usize>,
}

impl TtShape {
    pub fn new(
        input_dims: Vec<usize>,
        output_dims: Vec<usize>,
        ranks: Vec<usize>,
    ) -> Result<Self, TtError> {
        let k = input_dims.len();
        if k == 0 {
            return Err(TtError::InvalidShape("order K must be >= 1".into()));
        }
        if output_dims.len() != k {
            return Err(TtError::InvalidShape(format!(
                "{} input dims but {} output dims",
                k,
                output_dims.len()
            )));
        }
        if ranks.len() != k + 1 {
            return Err(TtError::InvalidShape(format!(
                "expected {} ranks for order {}, got {}",
                k + 1,
                k,
                ranks.len()
            )));
        }
        if ranks[0] != 1 || ranks[k] != 1 {
            return Err(TtError::InvalidShape(
                "boundary ranks r_1 and r_{K+1} must be 1".into(),
            ));
        }
        if input_dims.iter().chain(&output_dims).chain(&ranks).any(|&d| d == 0) {
            return Err(TtError::InvalidShape("dims and ranks must be >= 1".into()));
        }
        Ok(Self {
            input_dims,
            output_dims,
            ranks,
        })
    }

    pub fn order(&self) -> usize {
        self.input_dims.len()
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_dims.iter().product()
    }
}

/// One 4-way TT core with data in `(r_k, i_k, j_k, r_{k+1})` row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TtCore {
    pub left_rank: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub right_rank: usize,
    pub data: Vec<f64>,
}

impl TtCore {
    pub fn zeros(left_rank: usize, input_dim: usize, output_dim: usize, right_rank: usize) -> Self {
        Self {
            left_rank,
            input_dim,
            output_dim,
            right_rank,
            data: vec![0.0; left_rank * input_dim * output_dim * right_rank],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, a: usize, i: usize, j: usize, b: usize) -> usize {
        ((a * self.input_dim + i) * self.output_dim + j) * self.right_rank + b
    }

    #[inline]
    pub fn at(&self, a: usize, i: usize, j: usize, b: usize) -> f64 {
        self.data[self.idx(a, i, j, b)]
    }
}

/// Gradients returned by [`TtLayer::backward`].
#[derive(Debug, Clone)]
pub struct TtBackward {
    /// Gradient w.r.t. the flattened input tensor.
    pub grad_input: Vec<f64>,
    /// One gradient buffer per core, laid out exactly like the core data.
    pub grad_cores: Vec<Vec<f64>>,
}

/// A TT linear layer: a chain of cores applied to a dense input tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TtLayer {
    shape: TtShape,
    cores: Vec<TtCore>,
}

impl TtLayer {
    pub fn new(shape: TtShape, cores: Vec<TtCore>) -> Result<Self, TtError> {
        if cores.len() != shape.order() {
            return Err(TtError::InvalidShape(format!(
                "expected {} cores, got {}",
                shape.order(),
                cores.len()
            )));
        }
        for (k, core) in cores.iter().enumerate() {
            let want = (
                shape.ranks[k],
                shape.input_dims[k],
                shape.output_dims[k],
                shape.ranks[k + 1],
            );
            let got = (
                core.left_rank,
                core.input_dim,
                core.output_dim,
                core.right_rank,
            );
            if want != got {
                return Err(TtError::InvalidShape(format!(
                    "core {k} extents {got:?} do not match shape {want:?}"
                )));
            }
            if core.data.len() != core.left_rank * core.input_dim * core.output_dim * core.right_rank
            {
                return Err(TtError::InvalidShape(format!(
                    "core {k} buffer length {} does not match extents",
                    core.data.len()
                )));
            }
            if core.data.iter().any(|v| !v.is_finite()) {
                return Err(TtError::NonFinite(k));
            }
        }
        Ok(Self { shape, cores })
    }

    pub fn zeros(shape: TtShape) -> Self {
        let cores = (0..shape.order())
            .map(|k| {
                TtCore::zeros(
                    shape.ranks[k],
                    shape.input_dims[k],
                    shape.output_dims[k],
                    shape.ranks[k + 1],
                )
            })
            .collect();
        Self { shape, cores }
    }

    /// Gaussian initialization with per-core standard deviation
    /// `(r_k * I_k * r_{k+1})^{-1/2}`, which keeps the reconstructed map at
    /// O(1) spectral scale.
    pub fn random<R: Rng>(shape: TtShape, rng: &mut R) -> Self {
        let mut layer = Self::zeros(shape);
        for core in &mut layer.cores {
            let sd = 1.0 / ((core.left_rank * core.input_dim * core.right_rank) as f64).sqrt();
            let normal = Normal::new(0.0, sd).expect("positive std dev");
            for v in &mut core.data {
                *v = normal.sample(rng);
            }
        }
        layer
    }

    pub fn shape(&self) -> &TtShape {
        &self.shape
    }

    pub fn cores(&self) -> &[TtCore] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [TtCore] {
        &mut self.cores
    }

    /// Total number of scalar parameters: `sum_k r_k * I_k * J_k * r_{k+1}`.
    pub fn param_count(&self) -> usize {
        self.cores.iter().map(TtCore::len).sum()
    }

    /// Apply the layer to a dense input tensor (flattened row-major,
    /// extents `input_dims`), producing the dense output vector of length
    /// `prod J_k`.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, TtError> {
        let (mut bufs, _) = self.contract(input, false)?;
        Ok(bufs.pop().expect("contraction yields an output"))
    }

    /// Reverse-mode gradients of the forward contraction.
    ///
    /// `upstream` is the loss gradient w.r.t. the output vector. The returned
    /// gradients are exact for the implemented contraction.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<TtBackward, TtError> {
        if upstream.len() != self.shape.output_len() {
            return Err(TtError::DimensionMismatch(format!(
                "upstream length {} but layer output length {}",
                upstream.len(),
                self.shape.output_len()
            )));
        }
        let (bufs, steps) = self.contract(input, true)?;
        let mut grad_cores: Vec<Vec<f64>> = self.cores.iter().map(|c| vec![0.0; c.len()]).collect();
        let mut grad_buf = upstream.to_vec();

        for (k, step) in steps.iter().enumerate().rev() {
            let core = &self.cores[k];
            let prev = &bufs[k];
            let StepDims {
                jprod,
                itail,
                idim,
                jdim,
                left_rank,
                right_rank,
            } = *step;
            let gc = &mut grad_cores[k];
            let mut grad_prev = vec![0.0; prev.len()];
            for a in 0..left_rank {
                for i in 0..idim {
                    for j in 0..jdim {
                        for b in 0..right_rank {
                            let w = core.at(a, i, j, b);
                            let mut dw = 0.0;
                            for jp in 0..jprod {
                                let src = (a * jprod + jp) * (idim * itail) + i * itail;
                                let dst = ((b * jprod + jp) * jdim + j) * itail;
                                for t in 0..itail {
                                    let g = grad_buf[dst + t];
                                    dw += g * prev[src + t];
                                    grad_prev[src + t] += w * g;
                                }
                            }
                            gc[core.idx(a, i, j, b)] += dw;
                        }
                    }
                }
            }
            grad_buf = grad_prev;
        }

        Ok(TtBackward {
            grad_input: grad_buf,
            grad_cores,
        })
    }

    /// Materialize the full `(prod J_k) x (prod I_k)` matrix, rows and
    /// columns flattened with the crate-wide convention. Serves as the dense
    /// oracle for the chained contraction.
    pub fn reconstruct(&self) -> Vec<f64> {
        // Accumulator of logical shape (rank, jflat, iflat).
        let mut acc = vec![1.0];
        let mut jflat = 1usize;
        let mut iflat = 1usize;
        for core in &self.cores {
            let (rl, rr) = (core.left_rank, core.right_rank);
            let (idim, jdim) = (core.input_dim, core.output_dim);
            let mut next = vec![0.0; rr * jflat * jdim * iflat * idim];
            let ncols = iflat * idim;
            for b in 0..rr {
                for jf in 0..jflat {
                    for j in 0..jdim {
                        let row = (b * jflat + jf) * jdim + j;
                        for ifo in 0..iflat {
                            for i in 0..idim {
                                let mut s = 0.0;
                                for a in 0..rl {
                                    s += acc[(a * jflat + jf) * iflat + ifo] * core.at(a, i, j, b);
                                }
                                next[row * ncols + ifo * idim + i] = s;
                            }
                        }
                    }
                }
            }
            acc = next;
            jflat *= jdim;
            iflat *= idim;
        }
        acc
    }

    /// Shared contraction engine; optionally keeps per-step activations.
    fn contract(
        &self,
        input: &[f64],
        keep_all: bool,
    ) -> Result<(Vec<Vec<f64>>, Vec<StepDims>), TtError> {
        if input.len() != self.shape.input_len() {
            return Err(TtError::DimensionMismatch(format!(
                "input length {} but layer expects {} (= {:?} flattened)",
                input.len(),
                self.shape.input_len(),
                self.shape.input_dims
            )));
        }
        let mut bufs: Vec<Vec<f64>> = vec![input.to_vec()];
        let mut steps = Vec::with_capacity(self.shape.order());
        let mut jprod = 1usize;
        let mut itail: usize = self.shape.input_len();
        for core in &self.cores {
            let (rl, rr) = (core.left_rank, core.right_rank);
            let (idim, jdim) = (core.input_dim, core.output_dim);
            itail /= idim;
            let buf = bufs.last().expect("non-empty buffer chain");
            let mut next = vec![0.0; rr * jprod * jdim * itail];
            for a in 0..rl {
                for i in 0..idim {
                    for j in 0..jdim {
                        for b in 0..rr {
                            let w = core.at(a, i, j, b);
                            if w == 0.0 {
                                continue;
                            }
                            for jp in 0..jprod {
                                let src = (a * jprod + jp) * (idim * itail) + i * itail;
                                let dst = ((b * jprod + jp) * jdim + j) * itail;
                                for t in 0..itail {
                                    next[dst + t] += w * buf[src + t];
                                }
                            }
                        }
                    }
                }
            }
            steps.push(StepDims {
                jprod,
                itail,
                idim,
                jdim,
                left_rank: rl,
                right_rank: rr,
            });
            if keep_all {
                bufs.push(next);
            } else {
                *bufs.last_mut().expect("buffer") = next;
            }
            jprod *= jdim;
        }
        Ok((bufs, steps))
    }
}

#[derive(Debug, Clone, Copy)]
struct StepDims {
    jprod: usize,
    itail: usize,
    idim: usize,
    jdim: usize,
    left_rank: usize,
    right_rank: usize,
}

/// A TT vector: chain of 3-way cores `(r_k, i_k, r_{k+1})` whose ordered
/// matrix product reproduces each tensor entry.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Core `k` has row-major layout `(ranks[k], dims[k], ranks[k+1])`.
    pub cores: Vec<Vec<f64>>,
}

impl TtVector {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, cores: Vec<Vec<f64>>) -> Result<Self, TtError> {
        let k = dims.len();
        if k == 0 || ranks.len() != k + 1 || ranks[0] != 1 || ranks[k] != 1 {
            return Err(TtError::InvalidShape(
                "TT vector needs K >= 1 dims and K+1 ranks with unit boundaries".into(),
            ));
        }
        if cores.len() != k {
            return Err(TtError::InvalidShape(format!(
                "expected {} cores, got {}",
                k,
                cores.len()
            )));
        }
        for (m, core) in cores.iter().enumerate() {
            if core.len() != ranks[m] * dims[m] * ranks[m + 1] {
                return Err(TtError::InvalidShape(format!(
                    "core {m} length {} does not match (r, I, r') = ({}, {}, {})",
                    core.len(),
                    ranks[m],
                    dims[m],
                    ranks[m + 1]
                )));
            }
        }
        Ok(Self { dims, ranks, cores })
    }

    pub fn param_count(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    /// Contract all cores back into the dense tensor (flattened row-major).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut acc = vec![1.0];
        let mut iflat = 1usize;
        for (m, core) in self.cores.iter().enumerate() {
            let (rl, idim, rr) = (self.ranks[m], self.dims[m], self.ranks[m + 1]);
            let mut next = vec![0.0; rr * iflat * idim];
            for b in 0..rr {
                for ifo in 0..iflat {
                    for i in 0..idim {
                        let mut s = 0.0;
                        for a in 0..rl {
                            s += acc[a * iflat + ifo] * core[(a * idim + i) * rr + b];
                        }
                        next[(b * iflat + ifo) * idim + i] = s;
                    }
                }
            }
            acc = next;
            iflat *= idim;
        }
        acc
    }
}

/// Result of a TT decomposition: the factored vector and the relative
/// Frobenius reconstruction error against the input tensor.
#[derive(Debug, Clone)]
pub struct TtDecomposition {
    pub vector: TtVector,
    pub rel_error: f64,
}

/// Factor a dense K-way tensor into TT cores at the requested ranks.
///
/// Uses sequential unfolding factorizations: at each mode the Gram matrix of
/// the unfolding is eigendecomposed (Jacobi) and the leading eigenvectors
/// become the next core. When the requested ranks are at least the exact
/// TT-ranks the reconstruction is exact up to round-off; otherwise the result
/// is a truncated approximation and `rel_error` reports the loss.
pub fn tt_decompose(
    tensor: &[f64],
    dims: &[usize],
    ranks: &[usize],
) -> Result<TtDecomposition, TtError> {
    let k = dims.len();
    if k == 0 || ranks.len() != k + 1 || ranks[0] != 1 || ranks[k] != 1 {
        return Err(TtError::InvalidShape(
            "need K >= 1 dims and K+1 ranks with unit boundaries".into(),
        ));
    }
    let total: usize = dims.iter().product();
    if tensor.len() != total {
        return Err(TtError::DimensionMismatch(format!(
            "tensor length {} but dims {:?} flatten to {}",
            tensor.len(),
            dims,
            total
        )));
    }
    // Rank feasibility against the sequential unfolding dimensions.
    let mut cols = total;
    let mut r_prev = 1usize;
    for m in 0..k - 1 {
        let rows = r_prev * dims[m];
        cols /= dims[m];
        let limit = rows.min(cols);
        if ranks[m + 1] > limit {
            return Err(TtError::RankTooLarge {
                mode: m + 1,
                rank: ranks[m + 1],
                limit,
            });
        }
        r_prev = ranks[m + 1];
    }

    let norm = linalg::norm2(tensor);
    if norm == 0.0 {
        let cores = (0..k)
            .map(|m| vec![0.0; ranks[m] * dims[m] * ranks[m + 1]])
            .collect();
        return Ok(TtDecomposition {
            vector: TtVector::new(dims.to_vec(), ranks.to_vec(), cores)?,
            rel_error: 0.0,
        });
    }

    let mut cores: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut c = tensor.to_vec();
    let mut r_prev = 1usize;
    let mut cols = total;
    for m in 0..k - 1 {
        let rows = r_prev * dims[m];
        cols /= dims[m];
        let r_next = ranks[m + 1];
        // Gram matrix of the (rows x cols) unfolding.
        let mut gram = vec![0.0; rows * rows];
        for p in 0..rows {
            for q in p..rows {
                let mut s = 0.0;
                for t in 0..cols {
                    s += c[p * cols + t] * c[q * cols + t];
                }
                gram[p * rows + q] = s;
                gram[q * rows + p] = s;
            }
        }
        let (_, vecs) = linalg::sym_eigen(&gram, rows);
        // Leading r_next eigenvectors, kept in (rows x r_next) layout; this
        // is exactly the (r_prev, I_m, r_next) core buffer.
        let mut u = vec![0.0; rows * r_next];
        for i in 0..rows {
            for j in 0..r_next {
                u[i * r_next + j] = vecs[i * rows + j];
            }
        }
        // Project: C <- U^T C, shape (r_next x cols).
        let mut next = vec![0.0; r_next * cols];
        for j in 0..r_next {
            for i in 0..rows {
                let w = u[i * r_next + j];
                if w == 0.0 {
                    continue;
                }
                for t in 0..cols {
                    next[j * cols + t] += w * c[i * cols + t];
                }
            }
        }
        cores.push(u);
        c = next;
        r_prev = r_next;
    }
    // Last core: (r_prev, I_K, 1) is the residual matrix itself.
    cores.push(c);

    let vector = TtVector::new(dims.to_vec(), ranks.to_vec(), cores)?;
    let dense = vector.to_dense();
    let err: f64 = dense
        .iter()
        .zip(tensor)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(TtDecomposition {
        vector,
        rel_error: err / norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_layer(
        input_dims: &[usize],
        output_dims: &[usize],
        ranks: &[usize],
        seed: u64,
    ) -> TtLayer {
        let shape = TtShape::new(input_dims.to_vec(), output_dims.to_vec(), ranks.to_vec())
            .expect("valid shape");
        TtLayer::random(shape, &mut rng_from(seed))
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct per-entry evaluation of the ordered matrix product; independent
    /// of the progressive builder in `reconstruct`.
    fn dense_entry_oracle(layer: &TtLayer, j_multi: &[usize], i_multi: &[usize]) -> f64 {
        let mut row = vec![1.0]; // 1 x r running product
        for (k, core) in layer.cores().iter().enumerate() {
            let (rl, rr) = (core.left_rank, core.right_rank);
            let mut next = vec![0.0; rr];
            for b in 0..rr {
                for a in 0..rl {
                    next[b] += row[a] * core.at(a, i_multi[k], j_multi[k], b);
                }
            }
            row = next;
        }
        row[0]
    }

    fn unflatten(mut flat: usize, dims: &[usize]) -> Vec<usize> {
        let mut idx = vec![0; dims.len()];
        for (k, &d) in dims.iter().enumerate().rev() {
            idx[k] = flat % d;
            flat /= d;
        }
        idx
    }

    #[test]
    fn forward_order_one_is_plain_matvec() {
        let layer = random_layer(&[3], &[4], &[1, 1], 11);
        let x = random_vec(3, 5);
        let y = layer.forward(&x).unwrap();
        let core = &layer.cores()[0];
        for j in 0..4 {
            let expect: f64 = (0..3).map(|i| core.at(0, i, j, 0) * x[i]).sum();
            assert_abs_diff_eq!(y[j], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn forward_zero_cores_gives_zero() {
        let shape = TtShape::new(vec![2, 3], vec![2, 2], vec![1, 2, 1]).unwrap();
        let layer = TtLayer::zeros(shape);
        let y = layer.forward(&random_vec(6, 3)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_dense_reconstruction() {
        let layer = random_layer(&[2, 3, 2], &[2, 2, 2], &[1, 2, 2, 1], 21);
        let x = random_vec(12, 22);
        let y = layer.forward(&x).unwrap();
        let dense = layer.reconstruct();
        let oracle = crate::linalg::matvec(&dense, &x, 8, 12);
        let scale = crate::linalg::norm2(&oracle).max(1e-300);
        for (a, b) in y.iter().zip(&oracle) {
            assert!((a - b).abs() / scale <= 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn forward_shape_mismatch_is_reported() {
        let layer = random_layer(&[2, 2], &[2, 2], &[1, 2, 1], 1);
        let err = layer.forward(&[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, TtError::DimensionMismatch(_)));
    }

    #[test]
    fn reconstruct_rank_one_ones_cores() {
        let shape = TtShape::new(vec![2, 2], vec![2, 2], vec![1, 1, 1]).unwrap();
        let mut layer = TtLayer::zeros(shape);
        for core in layer.cores_mut() {
            core.data.fill(1.0);
        }
        let dense = layer.reconstruct();
        assert_eq!(dense.len(), 16);
        assert!(dense.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn reconstruct_matches_per_entry_oracle() {
        let layer = random_layer(&[2, 2], &[2, 2], &[1, 2, 1], 33);
        let dense = layer.reconstruct();
        for jf in 0..4 {
            for if_ in 0..4 {
                let jm = unflatten(jf, &[2, 2]);
                let im = unflatten(if_, &[2, 2]);
                let expect = dense_entry_oracle(&layer, &jm, &im);
                assert_abs_diff_eq!(dense[jf * 4 + if_], expect, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn reconstruct_order_one_is_the_core() {
        let layer = random_layer(&[3], &[2], &[1, 1], 4);
        let dense = layer.reconstruct();
        let core = &layer.cores()[0];
        for j in 0..2 {
            for i in 0..3 {
                assert_eq!(dense[j * 3 + i], core.at(0, i, j, 0));
            }
        }
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let layer = random_layer(&[2, 3], &[2, 2], &[1, 2, 1], 9);
        let x = random_vec(6, 10);
        let g = layer.backward(&x, &[0.0; 4]).unwrap();
        assert!(g.grad_input.iter().all(|&v| v == 0.0));
        assert!(g.grad_cores.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_order_one_closed_form() {
        let layer = random_layer(&[3], &[2], &[1, 1], 14);
        let x = random_vec(3, 15);
        let up = random_vec(2, 16);
        let g = layer.backward(&x, &up).unwrap();
        let core = &layer.cores()[0];
        // grad core = upstream (x) input outer product in (1, I, J, 1) layout.
        for i in 0..3 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    g.grad_cores[0][core.idx(0, i, j, 0)],
                    up[j] * x[i],
                    epsilon = 1e-14
                );
            }
        }
        // grad input = W^T upstream.
        for i in 0..3 {
            let expect: f64 = (0..2).map(|j| core.at(0, i, j, 0) * up[j]).sum();
            assert_abs_diff_eq!(g.grad_input[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut layer = random_layer(&[2, 3, 2], &[2, 2, 2], &[1, 2, 2, 1], 40);
        let x = random_vec(12, 41);
        let up = random_vec(8, 42);
        let g = layer.backward(&x, &up).unwrap();
        let h = 1e-5;
        let loss = |layer: &TtLayer, x: &[f64]| -> f64 {
            layer
                .forward(x)
                .unwrap()
                .iter()
                .zip(&up)
                .map(|(y, u)| y * u)
                .sum()
        };
        // Core entries.
        for k in 0..3 {
            for e in 0..layer.cores()[k].len() {
                let orig = layer.cores()[k].data[e];
                layer.cores_mut()[k].data[e] = orig + h;
                let lp = loss(&layer, &x);
                layer.cores_mut()[k].data[e] = orig - h;
                let lm = loss(&layer, &x);
                layer.cores_mut()[k].data[e] = orig;
                let fd = (lp - lm) / (2.0 * h);
                let an = g.grad_cores[k][e];
                let denom = fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    (fd - an).abs() / denom <= 1e-5,
                    "core {k} entry {e}: fd {fd} vs analytic {an}"
                );
            }
        }
        // Input entries.
        let mut xp = x.clone();
        for e in 0..x.len() {
            xp[e] = x[e] + h;
            let lp = loss(&layer, &xp);
            xp[e] = x[e] - h;
            let lm = loss(&layer, &xp);
            xp[e] = x[e];
            let fd = (lp - lm) / (2.0 * h);
            let an = g.grad_input[e];
            let denom = fd.abs().max(an.abs()).max(1e-8);
            assert!((fd - an).abs() / denom <= 1e-5, "input {e}: {fd} vs {an}");
        }
    }

    #[test]
    fn decompose_rank_one_outer_product() {
        let u = [1.0, -2.0];
        let v = [0.5, 1.5, -1.0];
        let w = [2.0, 0.25];
        let mut tensor = vec![0.0; 12];
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in v.iter().enumerate() {
                for (k, &c) in w.iter().enumerate() {
                    tensor[(i * 3 + j) * 2 + k] = a * b * c;
                }
            }
        }
        let dec = tt_decompose(&tensor, &[2, 3, 2], &[1, 1, 1, 1]).unwrap();
        assert!(dec.rel_error <= 1e-10, "rel error {}", dec.rel_error);
        let dense = dec.vector.to_dense();
        for (a, b) in dense.iter().zip(&tensor) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn decompose_zero_tensor_gives_zero_cores() {
        let dec = tt_decompose(&[0.0; 12], &[2, 3, 2], &[1, 2, 2, 1]).unwrap();
        assert_eq!(dec.rel_error, 0.0);
        assert!(dec.vector.cores.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn decompose_exact_ranks_round_trip() {
        let tensor = random_vec(12, 77);
        // Exact TT-ranks of a generic 2x3x2 tensor are (1, 2, 2, 1).
        let dec = tt_decompose(&tensor, &[2, 3, 2], &[1, 2, 2, 1]).unwrap();
        assert!(dec.rel_error <= 1e-8, "rel error {}", dec.rel_error);
    }

    #[test]
    fn decompose_rank_too_large_errors() {
        let tensor = random_vec(12, 78);
        let err = tt_decompose(&tensor, &[2, 3, 2], &[1, 3, 2, 1]).unwrap_err();
        assert!(matches!(err, TtError::RankTooLarge { mode: 1, .. }));
    }

    #[test]
    fn param_count_matches_core_extents() {
        // (1x7x2x3) + (3x16x2x3) + (3x7x2x1) = 42 + 288 + 42.
        let shape = TtShape::new(vec![7, 16, 7], vec![2, 2, 2], vec![1, 3, 3, 1]).unwrap();
        let layer = TtLayer::zeros(shape);
        assert_eq!(layer.param_count(), 372);

        let single = TtLayer::zeros(TtShape::new(vec![5], vec![3], vec![1, 1]).unwrap());
        assert_eq!(single.param_count(), 15);

        let unit = TtLayer::zeros(TtShape::new(vec![1, 1, 1], vec![1, 1, 1], vec![1; 4]).unwrap());
        assert_eq!(unit.param_count(), 3);
    }

    #[test]
    fn shape_validation_rejects_bad_boundaries() {
        assert!(TtShape::new(vec![2, 2], vec![2, 2], vec![2, 2, 1]).is_err());
        assert!(TtShape::new(vec![2, 2], vec![2, 2], vec![1, 0, 1]).is_err());
        assert!(TtShape::new(vec![], vec![], vec![1]).is_err());
        assert!(TtShape::new(vec![2], vec![2, 2], vec![1, 1]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let layer = random_layer(&[2, 2, 3], &[2, 2, 2], &[1, 2, 3, 1], seed);
            let x = random_vec(12, seed ^ 0xA5A5);
            let y = random_vec(12, seed ^ 0x5A5A);
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = layer.forward(&mixed).unwrap();
            let fx = layer.forward(&x).unwrap();
            let fy = layer.forward(&y).unwrap();
            let scale = crate::linalg::norm2(&lhs).max(1.0);
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (alpha * fx[k] + beta * fy[k])).abs() / scale <= 1e-10);
            }
        }

        #[test]
        fn forward_equals_dense_oracle(seed in 0u64..1000) {
            let layer = random_layer(&[3, 2, 2], &[2, 3, 2], &[1, 3, 2, 1], seed);
            let x = random_vec(12, seed ^ 0xBEEF);
            let y = layer.forward(&x).unwrap();
            let dense = layer.reconstruct();
            let oracle = crate::linalg::matvec(&dense, &x, 12, 12);
            let scale = crate::linalg::norm2(&oracle).max(1e-12);
            for k in 0..y.len() {
                prop_assert!((y[k] - oracle[k]).abs() / scale <= 1e-10);
            }
        }

        #[test]
        fn decompose_round_trip_exact_ranks(seed in 0u64..1000) {
            let tensor = random_vec(24, seed);
            // Exact sequential ranks for 2x3x4: (1, 2, 4, 1) capped by unfoldings.
            let dec = tt_decompose(&tensor, &[2, 3, 4], &[1, 2, 4, 1]).unwrap();
            prop_assert!(dec.rel_error <= 1e-8);
            let dense = dec.vector.to_dense();
            for (a, b) in dense.iter().zip(&tensor) {
                prop_assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}
