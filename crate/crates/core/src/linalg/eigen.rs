use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: Matrix<T>,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition. Intended for the small (≤ a few
/// hundred) matrices that appear in the Nystrom and PSD checks.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("symmetric_eigen", format!("{:?} is not square", a.shape())));
    }
    let mut m = a.clone();
    // symmetrize so round-off asymmetry does not leak into the rotations
    for i in 0..n {
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)]) * T::of(0.5);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();
    let tiny = T::epsilon() * T::epsilon() * scale * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in 0..i {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= tiny || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
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
    order.sort_by(|&x, &y| m[(x, x)].partial_cmp(&m[(y, y)]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = Matrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(SymmetricEigen { values, vectors })
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues with
/// magnitude below `rel_cutoff · max|λ|` are treated as zero.
pub fn pseudo_inverse<T: Scalar>(a: &Matrix<T>, rel_cutoff: T) -> Result<Matrix<T>> {
    let eig = symmetric_eigen(a)?;
    let n = a.rows();
    let lambda_max = eig.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cutoff = rel_cutoff * lambda_max;
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == T::zero() {
            continue;
        }
        let inv = T::one() / lambda;
        for i in 0..n {
            let vik = eig.vectors[(i, k)] * inv;
            for j in 0..n {
                out[(i, j)] += vik * eig.vectors[(j, k)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonalizes_2x2() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 1.0f64).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        // A v = λ v
        let av = a.matmul(&e.vectors).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                assert!((av[(i, k)] - e.values[k] * e.vectors[(i, k)]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn reconstructs_random_symmetric() {
        let n = 7;
        let b = Matrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 11) as f64 - 5.0);
        let a = b.add(&b.transpose()).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        let lam = Matrix::from_fn(n, n, |i, j| if i == j { e.values[i] } else { 0.0 });
        let rec = e.vectors.matmul(&lam).unwrap().matmul_t(&e.vectors).unwrap();
        assert!(rec.sub(&a).unwrap().max_abs() < 1e-11);
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn pinv_of_singular() {
        // rank-1: [[1,2],[2,4]] = 5 · u uᵀ with u = (1,2)/√5 ⇒ A⁺ = A / 25
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let p = pseudo_inverse(&a, 1e-10).unwrap();
        assert!(p.sub(&a.scale(1.0 / 25.0)).unwrap().max_abs() < 1e-14);
    }
}
