//! One-sided Jacobi singular value decomposition.
//!
//! Works at desk scale (matrices up to a couple thousand rows/cols),
//! converges to machine precision, and is fully deterministic: fixed
//! sweep order, stable ordering of tied singular values, and a sign
//! convention on the left singular vectors.

use super::{dot, rank_tolerance, Matrix};
use crate::error::{Error, Result};

/// Full factorization `M = U diag(s) V^T`.
///
/// `u` is m x m orthogonal, `vt` holds the right singular vectors as its
/// first min(m,n) rows (n x n overall), `s` is descending and nonnegative.
/// A truncated call instead yields u: m x k, s: k, vt: k x n.
#[derive(Debug, Clone)]
pub struct SVDResult {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl SVDResult {
    /// `U diag(s) V^T` using however many triplets the result carries.
    pub fn reconstruct(&self) -> Matrix {
        let m = self.u.rows();
        let n = self.vt.cols();
        let k = self.s.len();
        let mut out = Matrix::zeros(m, n);
        for t in 0..k {
            let sigma = self.s[t];
            if sigma == 0.0 {
                continue;
            }
            for i in 0..m {
                let ui = self.u.get(i, t) * sigma;
                for j in 0..n {
                    out.set(i, j, out.get(i, j) + ui * self.vt.get(t, j));
                }
            }
        }
        out
    }

    /// Count of singular values above the numerical-rank cutoff.
    pub fn numerical_rank(&self, rows: usize, cols: usize) -> usize {
        let smax = self.s.first().copied().unwrap_or(0.0);
        let tol = rank_tolerance(rows, cols, smax);
        self.s.iter().filter(|&&v| v > tol).count()
    }
}

const SWEEP_CAP_FACTOR: usize = 100;

pub fn svd(m: &Matrix) -> Result<SVDResult> {
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        // M = U S V^T  <=>  M^T = V S U^T
        let t = svd_tall(&m.transpose())?;
        let u = t.vt.transpose();
        let vt = t.u.transpose();
        let mut out = SVDResult { u, s: t.s, vt };
        apply_sign_convention(&mut out);
        Ok(out)
    }
}

/// Rank-k factors of the k largest singular triplets.
pub fn truncated_svd(m: &Matrix, k: usize) -> Result<SVDResult> {
    let kmax = m.rows().min(m.cols());
    if k == 0 || k > kmax {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {k} out of range 1..={kmax} for a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let full = svd(m)?;
    let mut u = Matrix::zeros(m.rows(), k);
    for i in 0..m.rows() {
        for j in 0..k {
            u.set(i, j, full.u.get(i, j));
        }
    }
    let mut vt = Matrix::zeros(k, m.cols());
    for i in 0..k {
        for j in 0..m.cols() {
            vt.set(i, j, full.vt.get(i, j));
        }
    }
    Ok(SVDResult {
        u,
        s: full.s[..k].to_vec(),
        vt,
    })
}

/// Moore-Penrose pseudo-inverse via the SVD, with singular values below
/// the numerical-rank cutoff treated as zero.
pub fn pseudo_inverse(m: &Matrix) -> Result<Matrix> {
    let f = svd(m)?;
    let smax = f.s.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(m.rows(), m.cols(), smax);
    // M+ = V diag(1/s) U^T, summed as rank-one terms.
    let mut out = Matrix::zeros(m.cols(), m.rows());
    for t in 0..f.s.len() {
        if f.s[t] <= tol {
            continue;
        }
        let inv = 1.0 / f.s[t];
        for i in 0..m.cols() {
            let vi = f.vt.get(t, i) * inv;
            for j in 0..m.rows() {
                out.set(i, j, out.get(i, j) + vi * f.u.get(j, t));
            }
        }
    }
    Ok(out)
}

/// One-sided Jacobi on a tall (m >= n) matrix: rotate pairs of columns of a
/// working copy until they are mutually orthogonal; column norms are the
/// singular values, normalized columns the left singular vectors, and the
/// accumulated rotations the right singular vectors.
fn svd_tall(m: &Matrix) -> Result<SVDResult> {
    let rows = m.rows();
    let n = m.cols();
    debug_assert!(rows >= n);

    // cols[j] is the j-th column of the working matrix.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v = Matrix::identity(n);

    let cap = SWEEP_CAP_FACTOR * n.max(1);
    let tol = 1.0e-15;
    let mut converged = false;
    for _sweep in 0..cap {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma);
                {
                    let cp = &cols[p];
                    let cq = &cols[q];
                    alpha = dot(cp, cp);
                    beta = dot(cq, cq);
                    gamma = dot(cp, cq);
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let a = cols[p][i];
                    let b = cols[q][i];
                    cols[p][i] = c * a - s * b;
                    cols[q][i] = s * a + c * b;
                }
                for i in 0..n {
                    let a = v.get(i, p);
                    let b = v.get(i, q);
                    v.set(i, p, c * a - s * b);
                    v.set(i, q, s * a + c * b);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            op: "svd",
            rows,
            cols: n,
            cap,
        });
    }

    let mut sigmas: Vec<f64> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    // Stable sort keeps ties in original-index order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigmas[b].partial_cmp(&sigmas[a]).unwrap());

    let smax = order.first().map(|&j| sigmas[j]).unwrap_or(0.0);
    let cutoff = rank_tolerance(rows, n, smax);

    let mut u = Matrix::zeros(rows, rows);
    let mut s = vec![0.0; n];
    let mut vt = Matrix::zeros(n, n);
    let mut filled = 0usize;
    for (slot, &j) in order.iter().enumerate() {
        let sigma = sigmas[j];
        for i in 0..n {
            vt.set(slot, i, v.get(i, j));
        }
        if sigma > cutoff {
            s[slot] = sigma;
            for i in 0..rows {
                u.set(i, slot, cols[j][i] / sigma);
            }
            filled = slot + 1;
        } else {
            s[slot] = 0.0;
        }
    }
    sigmas.clear();

    complete_orthonormal_basis(&mut u, filled);
    let mut out = SVDResult { u, s, vt };
    apply_sign_convention(&mut out);
    Ok(out)
}

/// Fill columns `from..` of `u` with an orthonormal completion of the
/// existing leading columns, built deterministically from standard basis
/// vectors via twice-applied modified Gram-Schmidt.
fn complete_orthonormal_basis(u: &mut Matrix, from: usize) {
    let m = u.rows();
    let mut have = from;
    let mut candidate = 0usize;
    while have < m && candidate < m {
        let mut w = vec![0.0; m];
        w[candidate] = 1.0;
        candidate += 1;
        for _pass in 0..2 {
            for k in 0..have {
                let proj: f64 = (0..m).map(|i| w[i] * u.get(i, k)).sum();
                for i in 0..m {
                    w[i] -= proj * u.get(i, k);
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > 1.0e-4 {
            for i in 0..m {
                u.set(i, have, w[i] / norm);
            }
            have += 1;
        }
    }
    debug_assert_eq!(have, m, "orthonormal completion fell short");
}

/// Deterministic signs: in each left singular vector, the first component of
/// largest magnitude is made nonnegative; the matching row of vt flips to
/// compensate so the product is unchanged.
fn apply_sign_convention(f: &mut SVDResult) {
    let m = f.u.rows();
    for j in 0..f.u.cols() {
        let mut pivot = 0usize;
        let mut best = -1.0;
        for i in 0..m {
            let a = f.u.get(i, j).abs();
            if a > best + 1.0e-14 {
                best = a;
                pivot = i;
            }
        }
        if f.u.get(pivot, j) < 0.0 {
            for i in 0..m {
                f.u.set(i, j, -f.u.get(i, j));
            }
            if j < f.vt.rows() {
                for i in 0..f.vt.cols() {
                    f.vt.set(j, i, -f.vt.get(j, i));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orth_residual(q: &Matrix) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        g.sub(&Matrix::identity(g.rows())).unwrap().frobenius_norm()
    }

    #[test]
    fn diagonal_matrix() {
        let m = Matrix::diagonal(&[3.0, 2.0]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.s[0] - 3.0).abs() < 1e-12);
        assert!((f.s[1] - 2.0).abs() < 1e-12);
        assert!(f.u.sub(&Matrix::identity(2)).unwrap().frobenius_norm() < 1e-12);
        assert!(f.vt.sub(&Matrix::identity(2)).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn permutation_matrix_has_unit_singular_values() {
        let m = Matrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.s[0] - 1.0).abs() < 1e-12);
        assert!((f.s[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shear_matrix_golden_ratio_spectrum() {
        // [[1,1],[0,1]]: sigma^2 are roots of t^2 - 3t + 1.
        let m = Matrix::new(2, 2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        let f = svd(&m).unwrap();
        let s1 = ((3.0 + 5.0_f64.sqrt()) / 2.0).sqrt();
        let s2 = ((3.0 - 5.0_f64.sqrt()) / 2.0).sqrt();
        assert!((f.s[0] - s1).abs() < 1e-12, "{} vs {s1}", f.s[0]);
        assert!((f.s[1] - s2).abs() < 1e-12);
    }

    #[test]
    fn rectangular_and_rank_deficient() {
        // 3x2 with identical columns: rank 1.
        let m = Matrix::new(3, 2, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        let f = svd(&m).unwrap();
        assert_eq!(f.numerical_rank(3, 2), 1);
        assert!(f.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-10);
        assert!(orth_residual(&f.u) < 1e-10);
        assert!(orth_residual(&f.vt.transpose()) < 1e-10);
        // wide variant through the transpose path
        let w = m.transpose();
        let fw = svd(&w).unwrap();
        assert!(fw.reconstruct().sub(&w).unwrap().frobenius_norm() < 1e-10);
        assert!(orth_residual(&fw.u) < 1e-10);
        assert!(orth_residual(&fw.vt.transpose()) < 1e-10);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let m = Matrix::new(3, 3, vec![-2.0, 1.0, 0.5, 1.0, -3.0, 1.0, 0.5, 1.0, 1.5]).unwrap();
        let a = svd(&m).unwrap();
        let b = svd(&m).unwrap();
        assert_eq!(a.u.data(), b.u.data());
        assert_eq!(a.vt.data(), b.vt.data());
        for j in 0..3 {
            let col = a.u.column(j);
            let best = col.iter().cloned().map(f64::abs).fold(f64::MIN, f64::max);
            let first = col.iter().find(|v| (v.abs() - best).abs() <= 1e-13).unwrap();
            assert!(*first >= 0.0, "column {j} pivot is negative");
        }
    }

    #[test]
    fn truncated_diag_eckart_young() {
        let m = Matrix::diagonal(&[3.0, 2.0]).unwrap();
        let t = truncated_svd(&m, 1).unwrap();
        let rec = t.reconstruct();
        assert!(rec.sub(&Matrix::diagonal(&[3.0, 0.0]).unwrap()).unwrap().frobenius_norm() < 1e-12);
        assert!((m.sub(&rec).unwrap().frobenius_norm() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_full_rank_is_exact() {
        let m = Matrix::new(3, 2, vec![1.0, 4.0, -2.0, 0.5, 3.0, 1.0]).unwrap();
        let t = truncated_svd(&m, 2).unwrap();
        assert!(t.reconstruct().sub(&m).unwrap().frobenius_norm() < 1e-8 * m.frobenius_norm());
    }

    #[test]
    fn truncated_error_matches_tail_singular_value() {
        let m = Matrix::new(
            4,
            3,
            vec![0.3, -1.2, 2.0, 1.5, 0.7, -0.4, -2.1, 0.9, 1.1, 0.2, -0.8, 0.6],
        )
        .unwrap();
        let full = svd(&m).unwrap();
        let t = truncated_svd(&m, 2).unwrap();
        let err = m.sub(&t.reconstruct()).unwrap().frobenius_norm();
        assert!((err - full.s[2]).abs() <= 1e-8 * full.s[2].max(1e-300));
    }

    #[test]
    fn truncated_rank_out_of_range() {
        let m = Matrix::identity(2);
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 3).is_err());
    }

    #[test]
    fn pinv_singular_diagonal() {
        let m = Matrix::diagonal(&[2.0, 0.0]).unwrap();
        let p = pseudo_inverse(&m).unwrap();
        assert!(p.sub(&Matrix::diagonal(&[0.5, 0.0]).unwrap()).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn pinv_identity() {
        let p = pseudo_inverse(&Matrix::identity(3)).unwrap();
        assert!(p.sub(&Matrix::identity(3)).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn pinv_full_column_rank_matches_normal_equations() {
        let m = Matrix::new(3, 2, vec![1.0, 2.0, 0.0, 1.0, 1.0, -1.0]).unwrap();
        // (M^T M)^{-1} M^T via the 2x2 inverse
        let mtm = m.transpose().matmul(&m).unwrap();
        let (a, b, c, d) = (mtm.get(0, 0), mtm.get(0, 1), mtm.get(1, 0), mtm.get(1, 1));
        let det = a * d - b * c;
        let inv = Matrix::new(2, 2, vec![d / det, -b / det, -c / det, a / det]).unwrap();
        let oracle = inv.matmul(&m.transpose()).unwrap();
        let p = pseudo_inverse(&m).unwrap();
        assert!(p.sub(&oracle).unwrap().frobenius_norm() < 1e-10);
    }
}
