//! Block-partitioned covariance tools: Nystrom reconstruction of the
//! unobserved block, the `Cov² = 2·Cov` fixed point of an identity landmark
//! block with orthonormal off-diagonal block, and the rotating-partition
//! whitening experiment.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pseudo_inverse, symmetric_eigen, Matrix};
use crate::objective::{covariance_grad, covariance_matrix, variance_grad, variance_loss, covariance_loss};
use crate::sampling::{check_indices, rotating_partition};
use crate::scalar::Scalar;

/// Relative eigenvalue cutoff of the landmark-block pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;
/// Largest tolerated asymmetry of the landmark block.
pub const SYMMETRY_TOL: f64 = 1e-8;

/// `Cov` split by landmark dimensions `L` and their complement `L̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovBlocks<T> {
    /// `Cov[L, L]`
    pub a: Matrix<T>,
    /// `Cov[L, L̄]`
    pub b: Matrix<T>,
    /// `Cov[L̄, L̄]`
    pub c_exact: Option<Matrix<T>>,
    pub landmarks: Vec<usize>,
    pub complement: Vec<usize>,
}

/// Extracts the landmark blocks; landmarks are sorted before use.
pub fn split_blocks<T: Scalar>(cov: &Matrix<T>, landmarks: &[usize]) -> Result<CovBlocks<T>> {
    let d = cov.rows();
    if cov.cols() != d {
        return Err(Error::shape("split_blocks", format!("{:?} is not square", cov.shape())));
    }
    let mut l = landmarks.to_vec();
    l.sort_unstable();
    check_indices("landmark", &l, d)?;
    if l.is_empty() || l.len() >= d {
        return Err(Error::Config(format!("need 0 < M < D landmarks, got M = {} for D = {d}", l.len())));
    }
    let complement: Vec<usize> = (0..d).filter(|i| l.binary_search(i).is_err()).collect();
    Ok(CovBlocks {
        a: cov.select(&l, &l),
        b: cov.select(&l, &complement),
        c_exact: Some(cov.select(&complement, &complement)),
        landmarks: l,
        complement,
    })
}

/// `Bᵀ A⁺ B`, the Nystrom estimate of the complement block.
pub fn nystrom_reconstruct<T: Scalar>(blocks: &CovBlocks<T>) -> Result<Matrix<T>> {
    let asym = blocks.a.asymmetry();
    if asym.as_f64() > SYMMETRY_TOL {
        return Err(Error::Config(format!("landmark block is not symmetric (max asymmetry {asym})")));
    }
    let a_pinv = pseudo_inverse(&blocks.a, T::of(PINV_CUTOFF))?;
    blocks.b.t_matmul(&a_pinv.matmul(&blocks.b)?)
}

/// `‖C − BᵀA⁺B‖_F / ‖C‖_F`, when the exact block is known.
pub fn nystrom_relative_error<T: Scalar>(blocks: &CovBlocks<T>) -> Result<Option<T>> {
    let Some(c) = &blocks.c_exact else { return Ok(None) };
    let approx = nystrom_reconstruct(blocks)?;
    let norm = c.frobenius_norm();
    let err = c.sub(&approx)?.frobenius_norm();
    Ok(Some(if norm > T::zero() { err / norm } else { err }))
}

/// Outcome of the `Cov² = 2·Cov` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    /// `‖A − I‖_max ≤ tol`
    pub a_is_identity: bool,
    /// `‖B·Bᵀ − I‖_max ≤ tol`
    pub b_row_orthonormal: bool,
    /// `‖Cov² − 2·Cov‖_F`
    pub residual: f64,
    pub cov_norm: f64,
    /// Ascending eigenvalues of the assembled `Cov`.
    pub spectrum: Vec<f64>,
    pub passed: bool,
}

/// Assembles `Cov = [[A, B], [Bᵀ, I]]` and measures `‖Cov² − 2·Cov‖_F`.
/// Violated preconditions are reported, never raised.
pub fn check_cov_fixed_point<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> Result<FixedPointReport> {
    let m = a.rows();
    if a.cols() != m || b.rows() != m {
        return Err(Error::shape("check_cov_fixed_point", format!("A {:?}, B {:?}", a.shape(), b.shape())));
    }
    let d = m + b.cols();
    let a_is_identity = a.sub(&Matrix::identity(m))?.max_abs() <= tol;
    let b_row_orthonormal = b.matmul_t(b)?.sub(&Matrix::identity(m))?.max_abs() <= tol;

    let cov = Matrix::from_fn(d, d, |i, j| match (i < m, j < m) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - m)],
        (false, true) => b[(j, i - m)],
        (false, false) => {
            if i == j {
                T::one()
            } else {
                T::zero()
            }
        }
    });
    let residual = cov.matmul(&cov)?.sub(&cov.scale(T::of(2.0)))?.frobenius_norm();
    let cov_norm = cov.frobenius_norm();
    let spectrum = symmetric_eigen(&cov)?.values.iter().map(|v| v.as_f64()).collect();
    let passed = a_is_identity && b_row_orthonormal && residual < tol * cov_norm;
    Ok(FixedPointReport {
        a_is_identity,
        b_row_orthonormal,
        residual: residual.as_f64(),
        cov_norm: cov_norm.as_f64(),
        spectrum,
        passed,
    })
}

/// One row of the rotating-partition trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub epoch: u64,
    pub split_id: usize,
    /// `‖Cov[split] − I‖_F` after this epoch's step.
    pub split_whiteness: f64,
    /// `Σ_{a≠b} Cov²_ab` over all dimensions.
    pub offdiag_energy: f64,
    /// `‖B·Bᵀ − c·I‖_F`, recorded on the final epoch only.
    pub b_orthonormality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhitenTrajectory {
    pub dims: usize,
    pub split_size: usize,
    pub initial_offdiag_energy: f64,
    pub rows: Vec<TrajectoryRow>,
    /// Whiteness of every split after the last epoch.
    pub final_split_whiteness: Vec<f64>,
    /// Set when a non-finite value stopped the run early.
    pub aborted: Option<String>,
}

impl WhitenTrajectory {
    pub fn final_offdiag_energy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.offdiag_energy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split_id,split_whiteness,offdiag_energy,b_orthonormality\n");
        for r in &self.rows {
            let b = r.b_orthonormality.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.split_id, r.split_whiteness, r.offdiag_energy, b
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn offdiag_energy<T: Scalar>(cov: &Matrix<T>) -> T {
    let mut e = T::zero();
    for i in 0..cov.rows() {
        for j in 0..cov.cols() {
            if i != j {
                e += cov[(i, j)] * cov[(i, j)];
            }
        }
    }
    e
}

/// `‖Cov[split] − I‖_F` for dimensions `split`.
pub fn split_whiteness<T: Scalar>(z: &Matrix<T>, split: &[usize]) -> Result<T> {
    let cov = covariance_matrix(z, None, Some(split))?;
    Ok(cov.sub(&Matrix::identity(split.len()))?.frobenius_norm())
}

/// `‖B·Bᵀ − c·I‖_F` where `B = Cov[split, rest]` and `c = tr(B·Bᵀ)/M`.
pub fn b_orthonormality<T: Scalar>(z: &Matrix<T>, split: &[usize]) -> Result<T> {
    let cov = covariance_matrix(z, None, None)?;
    let blocks = split_blocks(&cov, split)?;
    let bbt = blocks.b.matmul_t(&blocks.b)?;
    let m = bbt.rows();
    let c = (0..m).map(|i| bbt[(i, i)]).sum::<T>() / T::of_usize(m);
    Ok(bbt.sub(&Matrix::identity(m).scale(c))?.frobenius_norm())
}

/// Gradient descent on a free embedding matrix. Epoch `i` takes one step
/// on the variance and covariance terms restricted to split
/// `i mod (D/M)` of the rotating partition.
pub fn rotating_whiten_experiment<T: Scalar>(
    z0: &Matrix<T>,
    split_size: usize,
    epochs: u64,
    lr: T,
) -> Result<WhitenTrajectory> {
    let d = z0.cols();
    let splits = d / split_size.max(1);
    rotating_partition(d, split_size, 0)?;
    if epochs < splits as u64 {
        return Err(Error::Config(format!("need at least D/M = {splits} epochs, got {epochs}")));
    }
    if lr.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let eps = T::of(1e-4);
    let mut z = z0.clone();
    let initial = offdiag_energy(&covariance_matrix(&z, None, None)?);
    let mut traj = WhitenTrajectory {
        dims: d,
        split_size,
        initial_offdiag_energy: initial.as_f64(),
        rows: Vec::with_capacity(epochs as usize),
        final_split_whiteness: Vec::new(),
        aborted: None,
    };

    for epoch in 0..epochs {
        let split = rotating_partition(d, split_size, epoch)?;
        let mut g = variance_grad(&z, eps, None, Some(&split))?;
        g.add_scaled(T::one(), &covariance_grad(&z, None, Some(&split))?)?;
        z.add_scaled(-lr, &g)?;

        let loss = variance_loss(&z, eps, None, Some(&split))? + covariance_loss(&z, None, Some(&split))?;
        if !loss.is_finite() || !z.is_finite() {
            traj.aborted = Some(format!("non-finite state at epoch {epoch}"));
            return Ok(traj);
        }
        let cov = covariance_matrix(&z, None, None)?;
        let last = epoch + 1 == epochs;
        traj.rows.push(TrajectoryRow {
            epoch,
            split_id: (epoch % splits as u64) as usize,
            split_whiteness: split_whiteness(&z, &split)?.as_f64(),
            offdiag_energy: offdiag_energy(&cov).as_f64(),
            b_orthonormality: if last && splits > 1 {
                Some(b_orthonormality(&z, &split)?.as_f64())
            } else {
                None
            },
        });
    }
    traj.final_split_whiteness = (0..splits)
        .map(|k| {
            let split: Vec<usize> = (k * split_size..(k + 1) * split_size).collect();
            split_whiteness(&z, &split).map(|v| v.as_f64())
        })
        .collect::<Result<_>>()?;
    Ok(traj)
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.sample::<f64, _>(StandardNormal)))
}

/// Modified Gram-Schmidt on the columns of `m` (must have full column rank).
fn orthonormalize_columns<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut cols: Vec<Vec<T>> = (0..m.cols()).map(|j| m.col(j)).collect();
    for j in 0..cols.len() {
        for k in 0..j {
            let dot: T = cols[j].iter().zip(&cols[k]).map(|(&a, &b)| a * b).sum();
            let (head, tail) = cols.split_at_mut(j);
            for (x, &q) in tail[0].iter_mut().zip(&head[k]) {
                *x -= dot * q;
            }
        }
        let norm = cols[j].iter().map(|&v| v * v).sum::<T>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    Matrix::from_fn(m.rows(), m.cols(), |i, j| cols[j][i])
}

fn center_columns<T: Scalar>(m: &mut Matrix<T>) {
    let n = T::of_usize(m.rows());
    for j in 0..m.cols() {
        let mean = m.col(j).into_iter().sum::<T>() / n;
        for i in 0..m.rows() {
            m[(i, j)] -= mean;
        }
    }
}

/// Random `n × d` matrix whose sample covariance is exactly the identity
/// up to round-off: centered orthonormal columns scaled by `√(n − 1)`.
pub fn whitened_matrix<T: Scalar, R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Matrix<T>> {
    if d + 1 > n {
        return Err(Error::Config(format!("need n > d for a whitened {n}x{d} matrix")));
    }
    let mut g = gaussian::<T, _>(n, d, rng);
    center_columns(&mut g);
    Ok(orthonormalize_columns(&g).scale(T::of_usize(n - 1).sqrt()))
}

/// Gaussian `n × d` matrix with columns centered and scaled to unit
/// sample variance.
pub fn standardized_gaussian<T: Scalar, R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Matrix<T>> {
    if n < 2 {
        return Err(Error::TooFewNodes { op: "standardized_gaussian", got: n });
    }
    let mut g = gaussian::<T, _>(n, d, rng);
    center_columns(&mut g);
    for j in 0..d {
        let var = g.col(j).into_iter().map(|v| v * v).sum::<T>() / T::of_usize(n - 1);
        let inv = T::one() / var.sqrt();
        for i in 0..n {
            g[(i, j)] *= inv;
        }
    }
    Ok(g)
}

/// Random `m × m` orthogonal matrix.
pub fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(m: usize, rng: &mut R) -> Matrix<T> {
    orthonormalize_columns(&gaussian::<T, _>(m, m, rng))
}

/// `n × d` matrix with every split `R_k = Q·O_k` for one whitened
/// `n × m` frame `Q` and random orthogonal `O_k`. Every split is white and
/// every cross block `R_kᵀR_j/(n−1) = O_kᵀO_j` is orthogonal.
pub fn orthonormal_split_construction<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    d: usize,
    m: usize,
    rng: &mut R,
) -> Result<Matrix<T>> {
    rotating_partition(d, m, 0)?;
    let q = whitened_matrix::<T, _>(n, m, rng)?;
    let mut z = Matrix::zeros(n, d);
    for k in 0..d / m {
        let block = q.matmul(&random_orthogonal(m, rng))?;
        for i in 0..n {
            z.row_mut(i)[k * m..(k + 1) * m].copy_from_slice(block.row(i));
        }
    }
    Ok(z)
}
