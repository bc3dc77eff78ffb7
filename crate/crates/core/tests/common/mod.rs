//! Independent reference implementations shared by the integration tests
//! and the acceptance runner. Written with plain loops over `Vec<Vec<f64>>`
//! so they share no code with the library kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vicsample::linalg::Matrix;
use vicsample::objective::{LossMode, LossWeights};
use vicsample::sampling::SamplingPlan;

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &Matrix<f64>) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_fn(n, d, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick(idx: Option<&[usize]>, len: usize) -> Vec<usize> {
    idx.map_or_else(|| (0..len).collect(), <[usize]>::to_vec)
}

pub fn naive_invariance(z1: &Rows, z2: &Rows, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> f64 {
    let rows = pick(nodes, z1.len());
    let cols = pick(dims, z1[0].len());
    let mut total = 0.0;
    for &i in &rows {
        for &j in &cols {
            total += (z1[i][j] - z2[i][j]).powi(2);
        }
    }
    total / rows.len() as f64
}

pub fn naive_cov(z: &Rows, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> Rows {
    let rows = pick(nodes, z.len());
    let cols = pick(dims, z[0].len());
    let n = rows.len() as f64;
    let means: Vec<f64> = cols.iter().map(|&j| rows.iter().map(|&i| z[i][j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; cols.len()]; cols.len()];
    for (a, &ja) in cols.iter().enumerate() {
        for (b, &jb) in cols.iter().enumerate() {
            let s: f64 = rows.iter().map(|&i| (z[i][ja] - means[a]) * (z[i][jb] - means[b])).sum();
            cov[a][b] = s / (n - 1.0);
        }
    }
    cov
}

pub fn naive_variance(z: &Rows, eps: f64, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> f64 {
    let cov = naive_cov(z, nodes, dims);
    let d = cov.len() as f64;
    (0..cov.len()).map(|j| (1.0 - (cov[j][j] + eps).sqrt()).max(0.0)).sum::<f64>() / d
}

pub fn naive_covariance(z: &Rows, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> f64 {
    let cov = naive_cov(z, nodes, dims);
    let mut s = 0.0;
    for (a, row) in cov.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            if a != b {
                s += v * v;
            }
        }
    }
    s / cov.len() as f64
}

/// Reference total objective with the per-mode index placement spelled out.
pub fn naive_vicreg(z1: &Rows, z2: &Rows, w: &LossWeights, plan: &SamplingPlan, mode: LossMode) -> f64 {
    let nodes = plan.node_indices.as_deref();
    let dims = plan.dim_indices.as_deref();
    let (n_inv, d_inv, n_var, d_var, n_cov, d_cov) = match mode {
        LossMode::Full => (None, None, None, None, None, None),
        LossMode::NodeSampled => (nodes, None, nodes, None, nodes, None),
        LossMode::DimSampledCovOnly => (None, None, None, None, None, dims),
        LossMode::DimSampledAll => (None, dims, None, dims, None, dims),
        LossMode::Joint => (nodes, None, nodes, None, nodes, dims),
    };
    w.lambda_inv * naive_invariance(z1, z2, n_inv, d_inv)
        + w.mu_var * (naive_variance(z1, w.epsilon, n_var, d_var) + naive_variance(z2, w.epsilon, n_var, d_var))
        + w.nu_cov * (naive_covariance(z1, n_cov, d_cov) + naive_covariance(z2, n_cov, d_cov))
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Matrix<f64>, h: f64, mut f: impl FnMut(&Matrix<f64>) -> f64) -> Matrix<f64> {
    let mut probe = x.clone();
    let mut g = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

/// Largest elementwise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_rel_err(a: &Matrix<f64>, b: &Matrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Dense `D̃^{-1/2}(A + I)D̃^{-1/2}` from an edge list.
pub fn dense_normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Rows {
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect()
}

pub fn dense_mul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|r| {
            (0..cols)
                .map(|j| (0..inner).map(|k| r[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn relu(a: &Rows) -> Rows {
    a.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

/// Random plan for `mode` with the contracted cardinalities.
pub fn random_plan(rng: &mut ChaCha8Rng, n: usize, d: usize, p: f64, q: f64) -> SamplingPlan {
    let mut plan = SamplingPlan::full(0);
    plan.node_ratio = p;
    plan.dim_ratio = q;
    plan.node_indices = Some(vicsample::sampling::uniform_node_sample(n, p, rng).unwrap());
    plan.dim_indices = Some(vicsample::sampling::uniform_dim_sample(d, q, rng).unwrap());
    plan
}
