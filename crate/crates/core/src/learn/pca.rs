//! Principal component analysis on top of the Jacobi eigensolver.

use super::LearnError;
use crate::linalg;

/// A fitted projection: `project(x) = basis^T (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub in_dim: usize,
    pub num_components: usize,
    pub mean: Vec<f64>,
    /// Row-major `in_dim x num_components`; component `c` is column `c`.
    pub basis: Vec<f64>,
    /// Non-increasing, one entry per component.
    pub explained_variance: Vec<f64>,
    /// Set when the data had (numerically) no variance; the basis is then an
    /// arbitrary orthonormal completion.
    pub degenerate: bool,
}

impl Pca {
    pub fn param_count(&self) -> usize {
        self.basis.len() + self.mean.len()
    }
}

/// Fit a PCA basis by symmetric eigendecomposition (Jacobi) of the sample
/// covariance. Components are ordered by non-increasing explained variance.
pub fn pca_fit(data: &[Vec<f64>], num_components: usize) -> Result<Pca, LearnError> {
    let n = data.len();
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    let d = data[0].len();
    if data.iter().any(|row| row.len() != d) {
        return Err(LearnError::DimensionMismatch(
            "ragged rows in PCA input".into(),
        ));
    }
    if num_components == 0 || num_components > d.min(n) {
        return Err(LearnError::InvalidConfig(format!(
            "num_components {num_components} outside 1..=min(N={n}, D={d})"
        )));
    }

    let mut mean = vec![0.0; d];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Sample covariance; for a single row it is the zero matrix.
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for row in data {
        for i in 0..d {
            centered[i] = row[i] - mean[i];
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }

    let total_variance: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let degenerate = total_variance <= 1e-24;

    let (eigvals, eigvecs) = linalg::sym_eigen(&cov, d);
    let mut basis = vec![0.0; d * num_components];
    for i in 0..d {
        for c in 0..num_components {
            basis[i * num_components + c] = eigvecs[i * d + c];
        }
    }
    let explained_variance: Vec<f64> = eigvals[..num_components]
        .iter()
        .map(|&v| v.max(0.0))
        .collect();

    Ok(Pca {
        in_dim: d,
        num_components,
        mean,
        basis,
        explained_variance,
        degenerate,
    })
}

/// Project a vector onto the fitted components.
pub fn pca_project(x: &[f64], pca: &Pca) -> Result<Vec<f64>, LearnError> {
    if x.len() != pca.in_dim {
        return Err(LearnError::DimensionMismatch(format!(
            "pca expects {} inputs, got {}",
            pca.in_dim,
            x.len()
        )));
    }
    let u = pca.num_components;
    let mut out = vec![0.0; u];
    for i in 0..pca.in_dim {
        let c = x[i] - pca.mean[i];
        if c == 0.0 {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += c * pca.basis[i * u + k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn basis_column(pca: &Pca, c: usize) -> Vec<f64> {
        (0..pca.in_dim)
            .map(|i| pca.basis[i * pca.num_components + c])
            .collect()
    }

    #[test]
    fn line_data_gives_diagonal_component() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|k| {
                let t = k as f64 / 5.0 - 2.0;
                vec![t, t]
            })
            .collect();
        let pca = pca_fit(&data, 2).unwrap();
        let c0 = basis_column(&pca, 0);
        let r = 0.5f64.sqrt();
        assert_abs_diff_eq!(c0[0].abs(), r, epsilon = 1e-10);
        assert_abs_diff_eq!(c0[1].abs(), r, epsilon = 1e-10);
        assert_abs_diff_eq!(c0[0], c0[1], epsilon = 1e-10);
        // First component captures all the variance.
        let total: f64 = pca.explained_variance.iter().sum();
        assert_abs_diff_eq!(pca.explained_variance[0] / total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn isotropic_data_has_equal_variances() {
        // +/- a * e_d points give exactly the identity sample covariance
        // when a^2 = (2D - 1) / 2.
        let d = 3;
        let a = ((2.0 * d as f64 - 1.0) / 2.0).sqrt();
        let mut data = Vec::new();
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; d];
                row[axis] = sign * a;
                data.push(row);
            }
        }
        let pca = pca_fit(&data, 3).unwrap();
        for v in &pca.explained_variance {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-10);
        }
    }

    /// Closed-form eigenvalues of a symmetric 3x3 matrix via the
    /// trigonometric solution of the characteristic polynomial.
    fn sym3_eigenvalues(m: &[f64]) -> [f64; 3] {
        let p1 = m[1] * m[1] + m[2] * m[2] + m[5] * m[5];
        let q = (m[0] + m[4] + m[8]) / 3.0;
        let p2 = (m[0] - q).powi(2) + (m[4] - q).powi(2) + (m[8] - q).powi(2) + 2.0 * p1;
        if p2 <= 0.0 {
            return [q, q, q];
        }
        let p = (p2 / 6.0).sqrt();
        // B = (A - qI) / p; r = det(B) / 2 clamped into [-1, 1].
        let b: Vec<f64> = (0..9)
            .map(|k| (m[k] - if k % 4 == 0 { q } else { 0.0 }) / p)
            .collect();
        let det = b[0] * (b[4] * b[8] - b[5] * b[7]) - b[1] * (b[3] * b[8] - b[5] * b[6])
            + b[2] * (b[3] * b[7] - b[4] * b[6]);
        let r = (det / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let e2 = 3.0 * q - e1 - e3;
        [e1, e2.max(e3.min(e2)), e3.min(e2)]
    }

    #[test]
    fn random_data_matches_characteristic_polynomial_oracle() {
        let mut rng = crate::seed::rng_from(29);
        let data: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let pca = pca_fit(&data, 3).unwrap();

        // Rebuild the covariance independently.
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..3)
            .map(|i| data.iter().map(|r| r[i]).sum::<f64>() / n)
            .collect();
        let mut cov = vec![0.0; 9];
        for row in &data {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i * 3 + j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        let mut oracle = sym3_eigenvalues(&cov);
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (got, want) in pca.explained_variance.iter().zip(&oracle) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
        // Components diagonalize the covariance: C b_c = lambda_c b_c.
        for c in 0..3 {
            let bc = basis_column(&pca, c);
            let cb = crate::linalg::matvec(&cov, &bc, 3, 3);
            for i in 0..3 {
                assert_abs_diff_eq!(cb[i], oracle[c] * bc[i], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_and_variances_sorted() {
        let mut rng = crate::seed::rng_from(31);
        let data: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let pca = pca_fit(&data, 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = basis_column(&pca, a)
                    .iter()
                    .zip(basis_column(&pca, b))
                    .map(|(x, y)| x * y)
                    .sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, expect, epsilon = 1e-10);
            }
        }
        for w in pca.explained_variance.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!(!pca.degenerate);
    }

    #[test]
    fn constant_data_is_flagged_degenerate() {
        let data = vec![vec![0.3, 0.3, 0.3]; 5];
        let pca = pca_fit(&data, 2).unwrap();
        assert!(pca.degenerate);
        // Still orthonormal.
        for c in 0..2 {
            let col = basis_column(&pca, c);
            let nrm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(nrm, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projection_identities() {
        let mut rng = crate::seed::rng_from(37);
        let data: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let pca = pca_fit(&data, 3).unwrap();
        // The mean projects to zero.
        let z = pca_project(&pca.mean, &pca).unwrap();
        for v in z {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        // mean + basis column k projects to e_k.
        for k in 0..3 {
            let x: Vec<f64> = pca
                .mean
                .iter()
                .enumerate()
                .map(|(i, m)| m + pca.basis[i * 3 + k])
                .collect();
            let p = pca_project(&x, &pca).unwrap();
            for (j, v) in p.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(*v, expect, epsilon = 1e-10);
            }
        }
        // Random vector matches the naive dot-product evaluation.
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = pca_project(&x, &pca).unwrap();
        for k in 0..3 {
            let naive: f64 = (0..4)
                .map(|i| (x[i] - pca.mean[i]) * pca.basis[i * 3 + k])
                .sum();
            assert_abs_diff_eq!(p[k], naive, epsilon = 1e-12);
        }
    }
}
