use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::BenchConfig;
use super::report::write_file;
use crate::error::Result;
use crate::linalg::Matrix;
use crate::objective::{cov_buffer_peak, covariance_loss, reset_cov_buffer_peak};
use crate::scalar::Scalar;

/// Accepted ratio band when the selected dimension count doubles.
pub const DIM_DOUBLING_BAND: (f64, f64) = (2.5, 6.0);
/// Accepted ratio band when the node count doubles.
pub const NODE_DOUBLING_BAND: (f64, f64) = (1.5, 3.0);
/// Dimension ratios are only asserted from this size up.
pub const MIN_ASSERTED_DIMS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub dims: usize,
    /// Median over reps of one covariance-term evaluation.
    pub median_ms: f64,
    pub min_ms: f64,
    pub reps: usize,
    /// Calls timed together per rep.
    pub batch: usize,
    pub buffer_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    /// `"dims"` or `"nodes"`.
    pub axis: String,
    pub fixed: usize,
    pub from: usize,
    pub to: usize,
    pub ratio: f64,
    pub band: (f64, f64),
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    pub checks: Vec<ScalingCheck>,
    /// Every row's peak covariance buffer held exactly `dims²` entries.
    pub buffer_exact: bool,
}

impl ScalingReport {
    pub fn passed(&self) -> bool {
        self.buffer_exact && self.checks.iter().all(|c| c.passed)
    }

    pub fn row(&self, nodes: usize, dims: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.nodes == nodes && r.dims == dims)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("nodes,dims,median_ms,min_ms,reps,batch,buffer_entries\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.nodes, r.dims, r.median_ms, r.min_ms, r.reps, r.batch, r.buffer_entries
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_csv())
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times the covariance term of one `nodes × dims` matrix on the calling
/// thread. When a single call is shorter than `min_rep_ms`, several calls
/// are timed together and the per-call time is reported.
pub fn time_covariance<T: Scalar>(nodes: usize, dims: usize, cfg: &BenchConfig, seed: u64) -> Result<ScalingRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Matrix::<T>::from_fn(nodes, dims, |_, _| T::of(StandardNormal.sample(&mut rng)));
    let mut sink = T::zero();

    reset_cov_buffer_peak();
    for _ in 0..cfg.warmup.max(1) {
        sink += covariance_loss(&z, None, None)?;
    }
    let buffer_entries = cov_buffer_peak();

    let mut batch = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..batch {
            sink += covariance_loss(&z, None, None)?;
        }
        let ms = t.elapsed().as_secs_f64() * 1e3;
        if ms >= cfg.min_rep_ms || batch >= 1 << 16 {
            break;
        }
        batch *= 2;
    }

    let mut times: Vec<f64> = (0..cfg.reps)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..batch {
                sink += covariance_loss(&z, None, None).expect("validated above");
            }
            t.elapsed().as_secs_f64() * 1e3 / batch as f64
        })
        .collect();
    std::hint::black_box(sink);
    let min_ms = times.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ScalingRow {
        nodes,
        dims,
        median_ms: median(&mut times),
        min_ms,
        reps: cfg.reps,
        batch,
        buffer_entries,
    })
}

/// Median covariance-term timings over the configured grid, with the
/// doubling-ratio checks. Runs on the calling thread only.
pub fn bench_loss_scaling<T: Scalar>(cfg: &BenchConfig, seed: u64) -> Result<ScalingReport> {
    cfg.validate()?;
    let mut cells: Vec<(usize, usize)> = cfg.m_list.iter().map(|&m| (cfg.base_nodes, m)).collect();
    for &n in &cfg.n_list {
        if !cells.contains(&(n, cfg.base_dims)) {
            cells.push((n, cfg.base_dims));
        }
    }
    let mut rows = Vec::new();
    for (k, &(n, m)) in cells.iter().enumerate() {
        let row = time_covariance::<T>(n, m, cfg, seed.wrapping_add(k as u64))?;
        log::info!("n={n} d'={m}: median {:.3} ms (batch {})", row.median_ms, row.batch);
        rows.push(row);
    }

    let find = |n: usize, m: usize| rows.iter().find(|r| r.nodes == n && r.dims == m).map(|r| r.median_ms);
    let mut checks = Vec::new();
    let mut ms: Vec<usize> = cfg.m_list.clone();
    ms.sort_unstable();
    for &m in &ms {
        if m >= MIN_ASSERTED_DIMS && ms.contains(&(2 * m)) {
            let ratio = find(cfg.base_nodes, 2 * m).unwrap() / find(cfg.base_nodes, m).unwrap();
            checks.push(check("dims", cfg.base_nodes, m, 2 * m, ratio, DIM_DOUBLING_BAND));
        }
    }
    let mut ns: Vec<usize> = cfg.n_list.clone();
    ns.sort_unstable();
    for &n in &ns {
        if ns.contains(&(2 * n)) {
            let ratio = find(2 * n, cfg.base_dims).unwrap() / find(n, cfg.base_dims).unwrap();
            checks.push(check("nodes", cfg.base_dims, n, 2 * n, ratio, NODE_DOUBLING_BAND));
        }
    }
    let buffer_exact = rows.iter().all(|r| r.buffer_entries == r.dims * r.dims);
    Ok(ScalingReport { rows, checks, buffer_exact })
}

fn check(axis: &str, fixed: usize, from: usize, to: usize, ratio: f64, band: (f64, f64)) -> ScalingCheck {
    ScalingCheck {
        axis: axis.to_string(),
        fixed,
        from,
        to,
        ratio,
        band,
        passed: ratio >= band.0 && ratio <= band.1,
    }
}
