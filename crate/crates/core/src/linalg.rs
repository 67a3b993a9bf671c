//! Small dense linear-algebra helpers: symmetric Jacobi eigendecomposition
//! and matrix products on flat row-major buffers.
//!
//! The Jacobi solver is the single eigendecomposition routine in the crate;
//! both the TT unfolding factorization and PCA run on top of it.

/// Relative off-diagonal tolerance at which a Jacobi sweep loop stops.
pub const JACOBI_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// `a` is `n x n` row-major and is only read. Returns `(eigenvalues,
/// eigenvectors)` where `eigenvectors` is row-major `n x n` with eigenvector
/// `k` in column `k`, sorted by non-increasing eigenvalue. Column signs are
/// canonicalized so the entry of largest magnitude is positive.
///
/// Converges when the off-diagonal Frobenius norm falls below
/// [`JACOBI_TOL`] relative to the full Frobenius norm.
pub fn sym_eigen(a_in: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a_in.len(), n * n, "matrix buffer length");
    let mut a = a_in.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = off_diag_norm(&a, n);
            if off <= JACOBI_TOL * norm {
                break;
            }
            // Threshold below which a rotation is skipped this sweep.
            let skip = off / (n as f64 * n as f64);
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq.abs() <= skip * 1e-3 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = if theta.abs() > 1e12 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    let h = t * apq;
                    a[p * n + p] -= h;
                    a[q * n + q] += h;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for i in 0..n {
                        if i == p || i == q {
                            continue;
                        }
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        let nip = aip - s * (aiq + tau * aip);
                        let niq = aiq + s * (aip - tau * aiq);
                        a[i * n + p] = nip;
                        a[p * n + i] = nip;
                        a[i * n + q] = niq;
                        a[q * n + i] = niq;
                    }
                    for i in 0..n {
                        let vip = v[i * n + p];
                        let viq = v[i * n + q];
                        v[i * n + p] = vip - s * (viq + tau * vip);
                        v[i * n + q] = viq + s * (vip - tau * viq);
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .expect("finite eigenvalues")
    });
    let eigvals: Vec<f64> = order.iter().map(|&k| a[k * n + k]).collect();
    let mut eigvecs = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        // Sign convention: largest-magnitude entry positive.
        let mut best = 0;
        let mut best_abs = 0.0;
        for i in 0..n {
            let x = v[i * n + src].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        let flip = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            eigvecs[i * n + dst] = flip * v[i * n + src];
        }
    }
    (eigvals, eigvecs)
}

fn off_diag_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            s += 2.0 * a[p * n + q] * a[p * n + q];
        }
    }
    s.sqrt()
}

/// `C = A * B` for row-major `A (m x k)` and `B (k x n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for l in 0..k {
            let aval = a[i * k + l];
            if aval == 0.0 {
                continue;
            }
            let (brow, crow) = (&b[l * n..(l + 1) * n], &mut c[i * n..(i + 1) * n]);
            for j in 0..n {
                crow[j] += aval * brow[j];
            }
        }
    }
    c
}

/// `y = A * x` for row-major `A (m x n)`.
pub fn matvec(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(x.len(), n);
    (0..m)
        .map(|i| {
            let row = &a[i * n..(i + 1) * n];
            row.iter().zip(x).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Euclidean norm.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigen_diagonal_matrix() {
        let a = [3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 7.0];
        let (vals, vecs) = sym_eigen(&a, 3);
        assert_abs_diff_eq!(vals[0], 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2], -1.0, epsilon = 1e-12);
        // First column picks out index 2.
        assert_abs_diff_eq!(vecs[2 * 3], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        // A = V diag(L) V^T must reproduce the input.
        let a = [
            4.0, 1.0, -2.0, 0.5, //
            1.0, 3.0, 0.0, 1.5, //
            -2.0, 0.0, 1.0, 0.25, //
            0.5, 1.5, 0.25, -2.0,
        ];
        let n = 4;
        let (vals, vecs) = sym_eigen(&a, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += vecs[i * n + k] * vals[k] * vecs[j * n + k];
                }
                assert_abs_diff_eq!(s, a[i * n + j], epsilon = 1e-10);
            }
        }
        // Orthonormal columns.
        for c1 in 0..n {
            for c2 in 0..n {
                let dot: f64 = (0..n).map(|i| vecs[i * n + c1] * vecs[i * n + c2]).sum();
                let expect = if c1 == c2 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eigen_zero_matrix() {
        let (vals, vecs) = sym_eigen(&[0.0; 9], 3);
        assert!(vals.iter().all(|&v| v == 0.0));
        // Identity basis survives.
        for i in 0..3 {
            assert_abs_diff_eq!(vecs[i * 3 + i], 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3x2
        let c = matmul(&a, &b, 2, 3, 2);
        assert_eq!(c, vec![58.0, 64.0, 139.0, 154.0]);
    }
}
