//! Dense and sparse matrix kernels plus a small symmetric eigensolver.

mod dense;
mod eigen;
mod sparse;

pub use dense::Matrix;
pub use eigen::{pseudo_inverse, symmetric_eigen, SymmetricEigen};
pub use sparse::CsrMatrix;
