use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::VerifyConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nystrom::{
    b_orthonormality, check_cov_fixed_point, nystrom_relative_error, orthonormal_split_construction,
    random_orthogonal, rotating_whiten_experiment, split_blocks, standardized_gaussian, whitened_matrix,
    WhitenTrajectory,
};
use crate::objective::{covariance_loss, covariance_matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
    pub trajectory: WhitenTrajectory,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> VerifyCheck {
    VerifyCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Block-covariance checks on constructed instances plus the
/// rotating-partition whitening run, all in 64-bit.
pub fn run_verification(cfg: &VerifyConfig, seed: u64) -> Result<VerifyReport> {
    let (n, d, m) = (cfg.nodes, cfg.dims, cfg.split_size);
    if m == 0 || m >= d || d % m != 0 || n <= d {
        return Err(Error::Config(format!("verify needs 0 < M < D, M | D and N > D; got N={n} D={d} M={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // rank-M embedding: the last D − M columns mix the first M
    let base = whitened_matrix::<f64, _>(n, m, &mut rng)?;
    let mix = Matrix::from_fn(m, d, |i, j| if j < m { f64::from(u8::from(i == j)) } else { ((i + 2 * j) as f64).sin() });
    let low_rank = base.matmul(&mix)?;
    let mut landmarks = sample(&mut rng, d, m).into_vec();
    landmarks.sort_unstable();
    let cov = covariance_matrix(&low_rank, None, None)?;
    let err = nystrom_relative_error(&split_blocks(&cov, &landmarks)?)?.unwrap_or(f64::NAN);
    checks.push(check("nystrom_exact_low_rank", err < 1e-8, format!("relative error {err:.3e}, landmarks {landmarks:?}")));

    let rep = check_cov_fixed_point(&Matrix::identity(m), &random_orthogonal::<f64, _>(m, &mut rng), 1e-12)?;
    checks.push(check(
        "fixed_point_orthonormal_b",
        rep.passed && rep.residual < 1e-12,
        format!("residual {:.3e}, spectrum {:?}", rep.residual, rep.spectrum),
    ));

    let rep = check_cov_fixed_point(&Matrix::identity(m), &Matrix::zeros(m, m), 1e-12)?;
    checks.push(check(
        "fixed_point_zero_b_fails",
        !rep.passed,
        format!("residual {:.3e}, b_row_orthonormal {}", rep.residual, rep.b_row_orthonormal),
    ));

    let white = whitened_matrix::<f64, _>(n, d, &mut rng)?;
    let cov_loss = covariance_loss(&white, None, None)?;
    checks.push(check("covariance_zero_when_white", cov_loss.abs() < 1e-10, format!("loss {cov_loss:.3e}")));

    let built = orthonormal_split_construction::<f64, _>(n, d, m, &mut rng)?;
    let split: Vec<usize> = (0..m).collect();
    let b_err = b_orthonormality(&built, &split)?;
    checks.push(check("orthonormal_split_construction", b_err < 1e-10, format!("‖BBᵀ − cI‖ {b_err:.3e}")));

    let z0 = standardized_gaussian::<f64, _>(n, d, &mut rng)?;
    let trajectory = rotating_whiten_experiment(&z0, m, cfg.epochs, cfg.lr)?;
    let final_energy = trajectory.final_offdiag_energy().unwrap_or(f64::NAN);
    checks.push(check(
        "rotating_offdiag_energy_decreases",
        trajectory.aborted.is_none() && final_energy < trajectory.initial_offdiag_energy,
        format!("{:.4} -> {final_energy:.4}", trajectory.initial_offdiag_energy),
    ));
    let worst = trajectory.final_split_whiteness.iter().copied().fold(0.0, f64::max);
    checks.push(check(
        "rotating_splits_whitened",
        trajectory.aborted.is_none() && !trajectory.final_split_whiteness.is_empty() && worst < 0.1,
        format!("per-split whiteness {:?}", trajectory.final_split_whiteness),
    ));

    Ok(VerifyReport { checks, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let rep = run_verification(&VerifyConfig::default(), 0).unwrap();
        for c in &rep.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(rep.trajectory.rows.len(), 10_000);
    }

    #[test]
    fn rejects_bad_partition() {
        let cfg = VerifyConfig { dims: 8, split_size: 3, ..Default::default() };
        assert!(run_verification(&cfg, 0).is_err());
    }
}
