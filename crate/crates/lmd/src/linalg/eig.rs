//! Cyclic Jacobi eigendecomposition for symmetric matrices.

use super::Matrix;
use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors
/// as orthonormal columns of `vectors`.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const SYMMETRY_TOL: f64 = 1.0e-10;
const SWEEP_CAP_FACTOR: usize = 100;

pub fn eig_symmetric(m: &Matrix) -> Result<EigResult> {
    if m.rows() != m.cols() {
        return Err(Error::ShapeMismatch {
            op: "eig_symmetric",
            lhs: (m.rows(), m.cols()),
            rhs: (m.cols(), m.rows()),
        });
    }
    let residual = m.symmetry_residual();
    if residual > SYMMETRY_TOL {
        return Err(Error::Asymmetric { residual });
    }

    let n = m.rows();
    let mut a = m.clone();
    // Force exact symmetry so rotations stay consistent.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, avg);
            a.set(j, i, avg);
        }
    }
    let mut q = Matrix::identity(n);

    let cap = SWEEP_CAP_FACTOR * n.max(1);
    let norm = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1.0e-15 * norm;
    let mut converged = false;
    for _sweep in 0..cap {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if (2.0 * off).sqrt() <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a.get(p, r);
                if apr.abs() <= tol / (n * n) as f64 {
                    continue;
                }
                let app = a.get(p, p);
                let arr = a.get(r, r);
                let theta = (arr - app) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                // A <- J^T A J on rows/cols p and r
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akr = a.get(k, r);
                    a.set(k, p, c * akp - s * akr);
                    a.set(k, r, s * akp + c * akr);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let ark = a.get(r, k);
                    a.set(p, k, c * apk - s * ark);
                    a.set(r, k, s * apk + c * ark);
                }
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkr = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkr);
                    q.set(k, r, s * qkp + c * qkr);
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            op: "eig_symmetric",
            rows: n,
            cols: n,
            cap,
        });
    }

    let raw: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[y].partial_cmp(&raw[x]).unwrap());

    let mut values = Vec::with_capacity(n);
    let mut vectors = Matrix::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        values.push(raw[j]);
        // sign convention: first largest-magnitude component nonnegative
        let col = q.column(j);
        let best = col.iter().cloned().map(f64::abs).fold(f64::MIN, f64::max);
        let flip = col
            .iter()
            .find(|v| (v.abs() - best).abs() <= 1.0e-14)
            .map(|v| *v < 0.0)
            .unwrap_or(false);
        for i in 0..n {
            let v = if flip { -col[i] } else { col[i] };
            vectors.set(i, slot, v);
        }
    }
    Ok(EigResult { values, vectors })
}
