//! Forward values and input gradients of the three VICReg terms.
//!
//! Every term accepts optional node and dimension selections; `None`
//! selects everything. Gradients are returned at the full input shape,
//! zero outside the selection.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sampling::check_indices;
use crate::scalar::Scalar;

thread_local! {
    static COV_BUFFER_PEAK: Cell<usize> = const { Cell::new(0) };
}

/// Largest covariance buffer (in entries) allocated on this thread since
/// the last reset.
pub fn cov_buffer_peak() -> usize {
    COV_BUFFER_PEAK.with(Cell::get)
}

pub fn reset_cov_buffer_peak() {
    COV_BUFFER_PEAK.with(|c| c.set(0));
}

fn note_cov_buffer(entries: usize) {
    COV_BUFFER_PEAK.with(|c| c.set(c.get().max(entries)));
}

enum Sel<'a> {
    All(usize),
    Some(&'a [usize]),
}

impl<'a> Sel<'a> {
    fn new(what: &'static str, idx: Option<&'a [usize]>, len: usize) -> Result<Self> {
        match idx {
            None => Ok(Sel::All(len)),
            Some(i) => {
                check_indices(what, i, len)?;
                Ok(Sel::Some(i))
            }
        }
    }

    fn len(&self) -> usize {
        match self {
            Sel::All(n) => *n,
            Sel::Some(i) => i.len(),
        }
    }

    #[inline]
    fn get(&self, k: usize) -> usize {
        match self {
            Sel::All(_) => k,
            Sel::Some(i) => i[k],
        }
    }
}

/// Column-centered copy of the selected block, and its column means.
fn centered<T: Scalar>(z: &Matrix<T>, rows: &Sel, cols: &Sel) -> (Matrix<T>, Vec<T>) {
    let (n, d) = (rows.len(), cols.len());
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        let src = z.row(rows.get(r));
        let dst = out.row_mut(r);
        match cols {
            Sel::All(_) => dst.copy_from_slice(src),
            Sel::Some(c) => {
                for (x, &j) in dst.iter_mut().zip(c.iter()) {
                    *x = src[j];
                }
            }
        }
    }
    let mut mean = vec![T::zero(); d];
    for r in 0..n {
        for (m, &x) in mean.iter_mut().zip(out.row(r)) {
            *m += x;
        }
    }
    let inv_n = T::one() / T::of_usize(n);
    for m in &mut mean {
        *m *= inv_n;
    }
    for r in 0..n {
        for (x, &m) in out.row_mut(r).iter_mut().zip(&mean) {
            *x -= m;
        }
    }
    (out, mean)
}

fn need_two(op: &'static str, n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::TooFewNodes { op, got: n })
    } else {
        Ok(())
    }
}

fn scatter<T: Scalar>(shape: (usize, usize), rows: &Sel, cols: &Sel, block: &Matrix<T>) -> Matrix<T> {
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..rows.len() {
        let dst = out.row_mut(rows.get(r));
        for (k, &g) in block.row(r).iter().enumerate() {
            dst[cols.get(k)] = g;
        }
    }
    out
}

/// Mean squared euclidean distance between paired rows of the two views.
pub fn invariance_loss<T: Scalar>(z1: &Matrix<T>, z2: &Matrix<T>, nodes: Option<&[usize]>) -> Result<T> {
    Ok(invariance_value_grad(z1, z2, nodes, None, false)?.0)
}

/// Gradients of [`invariance_loss`] with respect to each view.
pub fn invariance_grad<T: Scalar>(
    z1: &Matrix<T>,
    z2: &Matrix<T>,
    nodes: Option<&[usize]>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    let g1 = invariance_value_grad(z1, z2, nodes, None, true)?.1.expect("requested");
    let g2 = g1.scale(-T::one());
    Ok((g1, g2))
}

/// Invariance restricted to optional dimensions; the gradient is with
/// respect to the first view (the second view's is its negation).
pub(crate) fn invariance_value_grad<T: Scalar>(
    z1: &Matrix<T>,
    z2: &Matrix<T>,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
    want_grad: bool,
) -> Result<(T, Option<Matrix<T>>)> {
    if z1.shape() != z2.shape() {
        return Err(Error::shape("invariance_loss", format!("{:?} vs {:?}", z1.shape(), z2.shape())));
    }
    let rows = Sel::new("node index", nodes, z1.rows())?;
    let cols = Sel::new("dimension index", dims, z1.cols())?;
    if rows.len() == 0 {
        return Err(Error::TooFewNodes { op: "invariance_loss", got: 0 });
    }
    let inv_n = T::one() / T::of_usize(rows.len());
    let two_over_n = T::of(2.0) * inv_n;
    let mut total = T::zero();
    let mut grad = want_grad.then(|| Matrix::zeros(z1.rows(), z1.cols()));
    for k in 0..rows.len() {
        let i = rows.get(k);
        let (a, b) = (z1.row(i), z2.row(i));
        let mut row_sum = T::zero();
        for c in 0..cols.len() {
            let j = cols.get(c);
            let diff = a[j] - b[j];
            row_sum += diff * diff;
            if let Some(g) = grad.as_mut() {
                g[(i, j)] = two_over_n * diff;
            }
        }
        total += row_sum;
    }
    Ok((total * inv_n, grad))
}

fn column_std<T: Scalar>(zc: &Matrix<T>, eps: T) -> Vec<T> {
    let denom = T::one() / T::of_usize(zc.rows() - 1);
    let mut var = vec![T::zero(); zc.cols()];
    for r in 0..zc.rows() {
        for (v, &x) in var.iter_mut().zip(zc.row(r)) {
            *v += x * x;
        }
    }
    var.into_iter().map(|v| (v * denom + eps).sqrt()).collect()
}

/// Hinge on the per-dimension standard deviation: the mean over selected
/// dimensions of `max(0, 1 − √(var + eps))`, variances taken over the
/// selected nodes with the `n − 1` denominator.
pub fn variance_loss<T: Scalar>(
    z: &Matrix<T>,
    eps: T,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<T> {
    let rows = Sel::new("node index", nodes, z.rows())?;
    let cols = Sel::new("dimension index", dims, z.cols())?;
    need_two("variance_loss", rows.len())?;
    if cols.len() == 0 {
        return Err(Error::Config("variance_loss needs at least one dimension".into()));
    }
    let (zc, _) = centered(z, &rows, &cols);
    let total: T = column_std(&zc, eps)
        .into_iter()
        .map(|s| (T::one() - s).max(T::zero()))
        .sum();
    Ok(total / T::of_usize(cols.len()))
}

/// Gradient of [`variance_loss`]. Dimensions with zero standard deviation
/// (only possible with `eps = 0`) get a zero subgradient.
pub fn variance_grad<T: Scalar>(
    z: &Matrix<T>,
    eps: T,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<Matrix<T>> {
    let rows = Sel::new("node index", nodes, z.rows())?;
    let cols = Sel::new("dimension index", dims, z.cols())?;
    need_two("variance_grad", rows.len())?;
    let (mut zc, _) = centered(z, &rows, &cols);
    let std = column_std(&zc, eps);
    let base = -T::one() / (T::of_usize(cols.len()) * T::of_usize(rows.len() - 1));
    let coef: Vec<T> = std
        .iter()
        .map(|&s| if s < T::one() && s > T::zero() { base / s } else { T::zero() })
        .collect();
    for r in 0..zc.rows() {
        for (x, &c) in zc.row_mut(r).iter_mut().zip(&coef) {
            *x *= c;
        }
    }
    Ok(scatter(z.shape(), &rows, &cols, &zc))
}

const ROW_CHUNK: usize = 256;
const COL_BLOCK: usize = 8;

/// `zcᵀ·zc / (n − 1)` computed on the upper triangle and mirrored.
fn gram<T: Scalar>(zc: &Matrix<T>) -> Matrix<T> {
    let (n, d) = zc.shape();
    note_cov_buffer(d * d);
    let mut cov = Matrix::zeros(d, d);
    let data = cov.data_mut();
    for chunk_start in (0..n).step_by(ROW_CHUNK) {
        let chunk_end = (chunk_start + ROW_CHUNK).min(n);
        for a0 in (0..d).step_by(COL_BLOCK) {
            let a1 = (a0 + COL_BLOCK).min(d);
            for r in chunk_start..chunk_end {
                let zr = zc.row(r);
                for a in a0..a1 {
                    let s = zr[a];
                    let dst = &mut data[a * d + a..(a + 1) * d];
                    for (c, &x) in dst.iter_mut().zip(&zr[a..]) {
                        *c += s * x;
                    }
                }
            }
        }
    }
    let scale = T::one() / T::of_usize(n - 1);
    for a in 0..d {
        for b in a..d {
            let v = data[a * d + b] * scale;
            data[a * d + b] = v;
            data[b * d + a] = v;
        }
    }
    cov
}

/// Sample covariance (`n − 1` denominator) of the selected block.
pub fn covariance_matrix<T: Scalar>(
    z: &Matrix<T>,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<Matrix<T>> {
    let rows = Sel::new("node index", nodes, z.rows())?;
    let cols = Sel::new("dimension index", dims, z.cols())?;
    need_two("covariance_matrix", rows.len())?;
    let (zc, _) = centered(z, &rows, &cols);
    Ok(gram(&zc))
}

fn offdiag_energy<T: Scalar>(cov: &Matrix<T>) -> T {
    let d = cov.rows();
    let mut total = T::zero();
    for a in 0..d {
        for (b, &v) in cov.row(a).iter().enumerate() {
            if a != b {
                total += v * v;
            }
        }
    }
    total
}

/// Sum of squared off-diagonal covariance entries divided by the number
/// of selected dimensions.
pub fn covariance_loss<T: Scalar>(
    z: &Matrix<T>,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<T> {
    let cov = covariance_matrix(z, nodes, dims)?;
    Ok(offdiag_energy(&cov) / T::of_usize(cov.rows()))
}

/// Gradient of [`covariance_loss`]: `4 / ((n − 1)·d') · Z̄ · offdiag(Cov)`.
pub fn covariance_grad<T: Scalar>(
    z: &Matrix<T>,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<Matrix<T>> {
    let rows = Sel::new("node index", nodes, z.rows())?;
    let cols = Sel::new("dimension index", dims, z.cols())?;
    need_two("covariance_grad", rows.len())?;
    let (zc, _) = centered(z, &rows, &cols);
    let mut cov = gram(&zc);
    let d = cov.rows();
    for a in 0..d {
        cov[(a, a)] = T::zero();
    }
    let coef = T::of(4.0) / (T::of_usize(rows.len() - 1) * T::of_usize(d));
    let block = zc.matmul(&cov)?.scale(coef);
    Ok(scatter(z.shape(), &rows, &cols, &block))
}

/// Loss and gradient sharing one covariance computation.
pub(crate) fn covariance_value_grad<T: Scalar>(
    z: &Matrix<T>,
    nodes: Option<&[usize]>,
    dims: Option<&[usize]>,
) -> Result<(T, Matrix<T>)> {
    let rows = Sel::new("node index", nodes, z.rows())?;
    let cols = Sel::new("dimension index", dims, z.cols())?;
    need_two("covariance_loss", rows.len())?;
    let (zc, _) = centered(z, &rows, &cols);
    let mut cov = gram(&zc);
    let d = cov.rows();
    let value = offdiag_energy(&cov) / T::of_usize(d);
    for a in 0..d {
        cov[(a, a)] = T::zero();
    }
    let coef = T::of(4.0) / (T::of_usize(rows.len() - 1) * T::of_usize(d));
    let block = zc.matmul(&cov)?.scale(coef);
    Ok((value, scatter(z.shape(), &rows, &cols, &block)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn invariance_examples() {
        let z = Matrix::from_fn(3, 4, |i, j| (i + j) as f64);
        assert_eq!(invariance_loss(&z, &z, None).unwrap(), 0.0);
        let zeros = Matrix::<f64>::zeros(5, 7);
        let ones = Matrix::filled(5, 7, 1.0);
        assert_eq!(invariance_loss(&zeros, &ones, None).unwrap(), 7.0);
        let a = m(&[&[1.0, 2.0], &[0.0, 0.0]]);
        let b = m(&[&[0.0, 0.0], &[5.0, 5.0]]);
        assert_eq!(invariance_loss(&a, &b, Some(&[0])).unwrap(), 5.0);
        assert!(invariance_loss(&a, &zeros, None).is_err());
    }

    #[test]
    fn variance_examples() {
        let constant = Matrix::filled(6, 3, 2.5);
        let v: f64 = variance_loss(&constant, 1e-4, None, None).unwrap();
        assert!((v - 0.99).abs() < 1e-15);
        // column (−2, 2): var = 8 ⇒ hinge inactive
        let wide = m(&[&[-2.0], &[2.0]]);
        assert_eq!(variance_loss(&wide, 1e-4, None, None).unwrap(), 0.0);
        // values ±1/√2·√(n−1)... two rows (−a, a) with 2a² = 1 ⇒ var = 1
        let a = (0.5f64).sqrt();
        let unit = m(&[&[-a, a], &[a, -a]]);
        assert!(variance_loss(&unit, 0.0, None, None).unwrap().abs() < 1e-15);
    }

    #[test]
    fn variance_needs_two_nodes() {
        let z = Matrix::<f64>::zeros(4, 2);
        assert!(matches!(
            variance_loss(&z, 1e-4, Some(&[1]), None),
            Err(Error::TooFewNodes { got: 1, .. })
        ));
        assert!(covariance_loss(&z, Some(&[3]), None).is_err());
    }

    #[test]
    fn covariance_examples() {
        let z = m(&[&[1.0, 1.0], &[-1.0, -1.0]]);
        let cov = covariance_matrix(&z, None, None).unwrap();
        assert_eq!(cov, m(&[&[2.0, 2.0], &[2.0, 2.0]]));
        assert_eq!(covariance_loss(&z, None, None).unwrap(), 4.0);
        let single = covariance_matrix(&z, None, Some(&[0])).unwrap();
        assert_eq!(single, m(&[&[2.0]]));
        assert_eq!(covariance_loss(&z, None, Some(&[1])).unwrap(), 0.0);
    }

    #[test]
    fn covariance_identity_construction() {
        // centered orthogonal columns scaled by √(n−1): (1,−1,1,−1) and (1,1,−1,−1), n = 4
        let s = 3f64.sqrt() / 2.0;
        let z = m(&[&[s, s], &[-s, s], &[s, -s], &[-s, -s]]);
        let cov = covariance_matrix(&z, None, None).unwrap();
        assert!(cov.sub(&Matrix::identity(2)).unwrap().max_abs() < 1e-15);
        assert!(covariance_loss(&z, None, None).unwrap() < 1e-30);
    }

    #[test]
    fn gram_blocking_matches_naive() {
        let (n, d) = (600, 19);
        let z = Matrix::from_fn(n, d, |i, j| ((i * 7 + j * 13) % 17) as f64 / 3.0 - (j as f64).sin());
        let cov = covariance_matrix(&z, None, None).unwrap();
        let mean: Vec<f64> = (0..d).map(|j| z.col(j).iter().sum::<f64>() / n as f64).collect();
        for a in 0..d {
            for b in 0..d {
                let naive: f64 = (0..n).map(|i| (z[(i, a)] - mean[a]) * (z[(i, b)] - mean[b])).sum::<f64>()
                    / (n - 1) as f64;
                assert!((cov[(a, b)] - naive).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn buffer_accounting_tracks_selected_dims() {
        reset_cov_buffer_peak();
        let z = Matrix::<f64>::from_fn(10, 12, |i, j| (i * j) as f64);
        covariance_loss(&z, None, Some(&[0, 3, 5, 7, 11])).unwrap();
        assert_eq!(cov_buffer_peak(), 25);
    }
}
