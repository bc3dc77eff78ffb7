use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::terms::{covariance_loss, covariance_value_grad, invariance_value_grad, variance_grad, variance_loss};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sampling::SamplingPlan;
use crate::scalar::Scalar;

/// Coefficients of the three terms and the variance-hinge epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_inv: f64,
    pub mu_var: f64,
    pub nu_cov: f64,
    pub epsilon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_inv: 25.0,
            mu_var: 25.0,
            nu_cov: 1.0,
            epsilon: 1e-4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_inv", self.lambda_inv),
            ("mu_var", self.mu_var),
            ("nu_cov", self.nu_cov),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and nonnegative")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Where the sampling plan applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// All nodes and dimensions for every term.
    #[default]
    Full,
    /// Every term on the sampled nodes.
    NodeSampled,
    /// Only the covariance term on the sampled dimensions.
    DimSampledCovOnly,
    /// All three terms on the sampled dimensions.
    DimSampledAll,
    /// Sampled nodes for every term, sampled dimensions for the covariance term.
    Joint,
}

impl LossMode {
    pub const ALL: [LossMode; 5] = [
        LossMode::Full,
        LossMode::NodeSampled,
        LossMode::DimSampledCovOnly,
        LossMode::DimSampledAll,
        LossMode::Joint,
    ];

    pub fn samples_nodes(self) -> bool {
        matches!(self, LossMode::NodeSampled | LossMode::Joint)
    }

    pub fn samples_dims(self) -> bool {
        matches!(
            self,
            LossMode::DimSampledCovOnly | LossMode::DimSampledAll | LossMode::Joint
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Full => "full",
            LossMode::NodeSampled => "node_sampled",
            LossMode::DimSampledCovOnly => "dim_sampled_cov_only",
            LossMode::DimSampledAll => "dim_sampled_all",
            LossMode::Joint => "joint",
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss mode '{s}'")))
    }
}

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LossBreakdown<T> {
    pub invariance: T,
    pub variance_view1: T,
    pub variance_view2: T,
    pub covariance_view1: T,
    pub covariance_view2: T,
    pub total: T,
    pub nodes_used: usize,
    pub dims_used: usize,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn cast<U: Scalar>(&self) -> LossBreakdown<U> {
        let c = |v: T| U::of(v.as_f64());
        LossBreakdown {
            invariance: c(self.invariance),
            variance_view1: c(self.variance_view1),
            variance_view2: c(self.variance_view2),
            covariance_view1: c(self.covariance_view1),
            covariance_view2: c(self.covariance_view2),
            total: c(self.total),
            nodes_used: self.nodes_used,
            dims_used: self.dims_used,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.invariance,
            self.variance_view1,
            self.variance_view2,
            self.covariance_view1,
            self.covariance_view2,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Wall time spent in each term, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermTimings {
    pub invariance_ms: f64,
    pub variance_ms: f64,
    pub covariance_ms: f64,
}

struct Selection<'a> {
    inv_nodes: Option<&'a [usize]>,
    inv_dims: Option<&'a [usize]>,
    var_dims: Option<&'a [usize]>,
    cov_dims: Option<&'a [usize]>,
}

fn selection<'a>(plan: &'a SamplingPlan, mode: LossMode) -> Selection<'a> {
    let nodes = if mode.samples_nodes() { plan.node_indices.as_deref() } else { None };
    let dims = if mode.samples_dims() { plan.dim_indices.as_deref() } else { None };
    let all_terms_dims = if mode == LossMode::DimSampledAll { dims } else { None };
    Selection {
        inv_nodes: nodes,
        inv_dims: all_terms_dims,
        var_dims: all_terms_dims,
        cov_dims: dims,
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Evaluates the combined objective for both views under `mode`.
pub fn vicreg_loss<T: Scalar>(
    z1: &Matrix<T>,
    z2: &Matrix<T>,
    weights: &LossWeights,
    plan: &SamplingPlan,
    mode: LossMode,
) -> Result<LossBreakdown<T>> {
    Ok(evaluate(z1, z2, weights, plan, mode, false)?.0)
}

/// Loss plus gradients with respect to `z1` and `z2`, and per-term timings.
#[allow(clippy::type_complexity)]
pub(crate) fn vicreg_value_grad<T: Scalar>(
    z1: &Matrix<T>,
    z2: &Matrix<T>,
    weights: &LossWeights,
    plan: &SamplingPlan,
    mode: LossMode,
) -> Result<(LossBreakdown<T>, Matrix<T>, Matrix<T>, TermTimings)> {
    let (bd, grads, timings) = evaluate(z1, z2, weights, plan, mode, true)?;
    let (g1, g2) = grads.expect("gradients requested");
    Ok((bd, g1, g2, timings))
}

#[allow(clippy::type_complexity)]
fn evaluate<T: Scalar>(
    z1: &Matrix<T>,
    z2: &Matrix<T>,
    weights: &LossWeights,
    plan: &SamplingPlan,
    mode: LossMode,
    want_grad: bool,
) -> Result<(LossBreakdown<T>, Option<(Matrix<T>, Matrix<T>)>, TermTimings)> {
    weights.validate()?;
    if z1.shape() != z2.shape() {
        return Err(Error::shape("vicreg_loss", format!("{:?} vs {:?}", z1.shape(), z2.shape())));
    }
    let sel = selection(plan, mode);
    let (lambda, mu, nu, eps) = (
        T::of(weights.lambda_inv),
        T::of(weights.mu_var),
        T::of(weights.nu_cov),
        T::of(weights.epsilon),
    );
    let mut timings = TermTimings::default();

    let t = Instant::now();
    let (inv, inv_grad) = invariance_value_grad(z1, z2, sel.inv_nodes, sel.inv_dims, want_grad)?;
    timings.invariance_ms = ms_since(t);

    let t = Instant::now();
    let var1 = variance_loss(z1, eps, sel.inv_nodes, sel.var_dims)?;
    let var2 = variance_loss(z2, eps, sel.inv_nodes, sel.var_dims)?;
    let var_grads = if want_grad {
        Some((
            variance_grad(z1, eps, sel.inv_nodes, sel.var_dims)?,
            variance_grad(z2, eps, sel.inv_nodes, sel.var_dims)?,
        ))
    } else {
        None
    };
    timings.variance_ms = ms_since(t);

    let t = Instant::now();
    let cov_term = |z: &Matrix<T>| -> Result<(T, Option<Matrix<T>>)> {
        if want_grad {
            let (v, g) = covariance_value_grad(z, sel.inv_nodes, sel.cov_dims)?;
            Ok((v, Some(g)))
        } else {
            Ok((covariance_loss(z, sel.inv_nodes, sel.cov_dims)?, None))
        }
    };
    let (cov1, cg1) = cov_term(z1)?;
    let (cov2, cg2) = cov_term(z2)?;
    timings.covariance_ms = ms_since(t);

    let total = lambda * inv + mu * (var1 + var2) + nu * (cov1 + cov2);
    let breakdown = LossBreakdown {
        invariance: inv,
        variance_view1: var1,
        variance_view2: var2,
        covariance_view1: cov1,
        covariance_view2: cov2,
        total,
        nodes_used: sel.inv_nodes.map_or(z1.rows(), <[usize]>::len),
        dims_used: sel.cov_dims.map_or(z1.cols(), <[usize]>::len),
    };

    let grads = if want_grad {
        let ig = inv_grad.expect("requested");
        let (vg1, vg2) = var_grads.expect("requested");
        let mut g1 = ig.scale(lambda);
        let mut g2 = ig.scale(-lambda);
        g1.add_scaled(mu, &vg1)?;
        g2.add_scaled(mu, &vg2)?;
        g1.add_scaled(nu, &cg1.expect("requested"))?;
        g2.add_scaled(nu, &cg2.expect("requested"))?;
        Some((g1, g2))
    } else {
        None
    };
    Ok((breakdown, grads, timings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::invariance_loss;

    fn sample_z(n: usize, d: usize, seed: usize) -> Matrix<f64> {
        Matrix::from_fn(n, d, |i, j| (((i + 3) * (j + 5) * (seed + 7)) % 23) as f64 / 7.0 - 1.5)
    }

    fn plan_all(n: usize, d: usize) -> SamplingPlan {
        SamplingPlan {
            node_indices: Some((0..n).collect()),
            dim_indices: Some((0..d).collect()),
            ..SamplingPlan::full(0)
        }
    }

    #[test]
    fn every_mode_matches_full_at_unit_ratio() {
        let (z1, z2) = (sample_z(9, 5, 1), sample_z(9, 5, 2));
        let w = LossWeights::default();
        let full = vicreg_loss(&z1, &z2, &w, &SamplingPlan::full(0), LossMode::Full).unwrap();
        for mode in LossMode::ALL {
            let bd = vicreg_loss(&z1, &z2, &w, &plan_all(9, 5), mode).unwrap();
            assert_eq!(bd, full, "{mode}");
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let (z1, z2) = (sample_z(8, 4, 3), sample_z(8, 4, 4));
        let w = LossWeights {
            lambda_inv: 2.0,
            mu_var: 3.0,
            nu_cov: 0.5,
            epsilon: 1e-4,
        };
        let bd = vicreg_loss(&z1, &z2, &w, &SamplingPlan::full(0), LossMode::Full).unwrap();
        let expect = 2.0 * bd.invariance
            + 3.0 * (bd.variance_view1 + bd.variance_view2)
            + 0.5 * (bd.covariance_view1 + bd.covariance_view2);
        assert_eq!(bd.total, expect);
        assert!(bd.invariance >= 0.0 && bd.covariance_view1 >= 0.0 && bd.variance_view2 >= 0.0);
        assert_eq!(bd.invariance, invariance_loss(&z1, &z2, None).unwrap());
    }

    #[test]
    fn cov_only_mode_restricts_covariance() {
        let (z1, z2) = (sample_z(10, 6, 5), sample_z(10, 6, 6));
        let w = LossWeights::default();
        let plan = SamplingPlan {
            dim_indices: Some(vec![1, 4, 5]),
            dim_ratio: 0.5,
            ..SamplingPlan::full(0)
        };
        let full = vicreg_loss(&z1, &z2, &w, &SamplingPlan::full(0), LossMode::Full).unwrap();
        let ds = vicreg_loss(&z1, &z2, &w, &plan, LossMode::DimSampledCovOnly).unwrap();
        assert_eq!(ds.invariance, full.invariance);
        assert_eq!(ds.variance_view1, full.variance_view1);
        assert_eq!(ds.dims_used, 3);
        assert_eq!(ds.covariance_view1, covariance_loss(&z1, None, Some(&[1, 4, 5])).unwrap());
        let all = vicreg_loss(&z1, &z2, &w, &plan, LossMode::DimSampledAll).unwrap();
        assert_ne!(all.variance_view1, full.variance_view1);
        assert_ne!(all.invariance, full.invariance);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in LossMode::ALL {
            assert_eq!(m.as_str().parse::<LossMode>().unwrap(), m);
        }
        assert!("bogus".parse::<LossMode>().is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let z = sample_z(4, 2, 0);
        let w = LossWeights {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(vicreg_loss(&z, &z, &w, &SamplingPlan::full(0), LossMode::Full).is_err());
    }
}
