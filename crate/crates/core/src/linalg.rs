//! Small dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! The covariance matrices here are at most 8x8 (four cameras, two image
//! coordinates each), so a short Jacobi sweep loop is plenty and keeps the
//! decomposition deterministic.

use nalgebra::{DMatrix, DVector};

/// Eigendecomposition of a symmetric matrix. Returns (eigenvalues,
/// eigenvectors as columns), sorted by descending eigenvalue.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    let frob = m.norm().max(1e-300);
    let tol = 1e-15 * frob;

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigvals = DVector::from_iterator(n, order.iter().map(|&i| m[(i, i)]));
    let mut eigvecs = DMatrix::<f64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        eigvecs.set_column(col, &v.column(i));
    }
    (eigvals, eigvecs)
}
