//! Acceptance runner. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Positional arguments select criteria by number.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use vicsample::experiment::{
    bench_loss_scaling, cell_config, pretrain, BenchConfig, CellSpec, ExperimentConfig, ExperimentReport,
};
use vicsample::graph::Graph;
use vicsample::linalg::Matrix;
use vicsample::nn::Tape;
use vicsample::nystrom::{
    check_cov_fixed_point, nystrom_relative_error, random_orthogonal, rotating_whiten_experiment, split_blocks,
    standardized_gaussian, whitened_matrix,
};
use vicsample::objective::{
    covariance_grad, covariance_loss, covariance_matrix, invariance_grad, variance_grad, LossMode, LossWeights,
};
use vicsample::sampling::{forman_ricci, ricci_node_probs, uniform_dim_sample, uniform_node_sample};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn algebraic() -> Outcome {
    let mut r = rng(100);
    let mut nystrom = 0.0f64;
    for (n, d, m) in [(20, 4, 2), (64, 8, 4), (200, 32, 8), (300, 64, 16)] {
        let base = random_matrix(&mut r, n, m, 1.0);
        let mix = Matrix::from_fn(m, d, |i, j| if j < m { f64::from(u8::from(i == j)) } else { r.random_range(-1.0..1.0) });
        let cov = covariance_matrix(&base.matmul(&mix).unwrap(), None, None).unwrap();
        let mut landmarks = rand::seq::index::sample(&mut r, d, m).into_vec();
        landmarks.sort_unstable();
        let err = nystrom_relative_error(&split_blocks(&cov, &landmarks).unwrap()).unwrap().unwrap();
        nystrom = nystrom.max(err);
    }
    let mut residual = 0.0f64;
    for m in [1, 2, 4, 8, 16] {
        let b = random_orthogonal::<f64, _>(m, &mut r);
        let rep = check_cov_fixed_point(&Matrix::identity(m), &b, 1e-12).unwrap();
        residual = residual.max(rep.residual);
    }
    let mut cov_loss = 0.0f64;
    for (n, d) in [(10, 3), (64, 8), (500, 64)] {
        let z = whitened_matrix::<f64, _>(n, d, &mut r).unwrap();
        cov_loss = cov_loss.max(covariance_loss(&z, None, None).unwrap().abs());
    }
    outcome(
        nystrom < 1e-8 && residual < 1e-12 && cov_loss < 1e-10,
        format!(
            "nystrom rel err {nystrom:.2e} (<1e-8), Cov²−2Cov residual {residual:.2e} (<1e-12), whitened cov loss {cov_loss:.2e} (<1e-10)"
        ),
    )
}

fn gradients() -> Outcome {
    const H: f64 = 1e-5;
    let mut r = rng(101);
    let w = LossWeights::default();
    let mut worst_term = 0.0f64;
    let mut worst_mode = 0.0f64;
    for trial in 0..40 {
        let (n, d) = (3 + trial % 6, 1 + trial % 6);
        let scale = [0.3, 1.0, 2.5][trial % 3];
        let z1 = random_matrix(&mut r, n, d, scale);
        let z2 = random_matrix(&mut r, n, d, scale);
        let plan = random_plan(&mut r, n, d, 0.7, 0.5);
        for nodes in [None, plan.node_indices.as_deref().filter(|s| s.len() >= 2)] {
            for dims in [None, plan.dim_indices.as_deref()] {
                let (g1, _) = invariance_grad(&z1, &z2, nodes).unwrap();
                let num = numeric_grad(&z1, H, |z| naive_invariance(&to_rows(z), &to_rows(&z2), nodes, None));
                worst_term = worst_term.max(max_rel_err(&g1, &num, 1e-6));
                let g = variance_grad(&z1, 1e-4, nodes, dims).unwrap();
                let num = numeric_grad(&z1, H, |z| naive_variance(&to_rows(z), 1e-4, nodes, dims));
                worst_term = worst_term.max(max_rel_err(&g, &num, 1e-6));
                let g = covariance_grad(&z1, nodes, dims).unwrap();
                let num = numeric_grad(&z1, H, |z| naive_covariance(&to_rows(z), nodes, dims));
                worst_term = worst_term.max(max_rel_err(&g, &num, 1e-6));
            }
        }
        if n < 4 {
            continue;
        }
        for mode in LossMode::ALL {
            let mut tape = Tape::new();
            let a = tape.param(0, z1.clone());
            let b = tape.param(1, z2.clone());
            let (loss, _, _) = tape.vicreg(a, b, &w, &plan, mode).unwrap();
            let grads = tape.backward(loss).unwrap();
            let n1 = numeric_grad(&z1, H, |z| naive_vicreg(&to_rows(z), &to_rows(&z2), &w, &plan, mode));
            let n2 = numeric_grad(&z2, H, |z| naive_vicreg(&to_rows(&z1), &to_rows(z), &w, &plan, mode));
            worst_mode = worst_mode
                .max(max_rel_err(grads.get(0).unwrap(), &n1, 1e-6))
                .max(max_rel_err(grads.get(1).unwrap(), &n2, 1e-6));
        }
    }
    outcome(
        worst_term < 1e-4 && worst_mode < 1e-4,
        format!("max rel err: terms {worst_term:.2e}, modes {worst_mode:.2e} (<1e-4)"),
    )
}

fn scaling() -> Outcome {
    let started = Instant::now();
    let rep = match bench_loss_scaling::<f64>(&BenchConfig::default(), 0) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("bench failed: {e}")),
    };
    let elapsed = started.elapsed();
    let checks: Vec<String> = rep
        .checks
        .iter()
        .map(|c| format!("{} {}→{}: {:.2} in [{}, {}]", c.axis, c.from, c.to, c.ratio, c.band.0, c.band.1))
        .collect();
    outcome(
        rep.passed() && within(elapsed, 300),
        format!("{}; peak buffer = d'² {}; {:.0}s (<300s)", checks.join(", "), rep.buffer_exact, elapsed.as_secs_f64()),
    )
}

fn rotating() -> Outcome {
    let started = Instant::now();
    let z0 = standardized_gaussian::<f64, _>(64, 8, &mut rng(102)).unwrap();
    let t = rotating_whiten_experiment(&z0, 4, 10_000, 0.05).unwrap();
    let elapsed = started.elapsed();
    let final_energy = t.final_offdiag_energy().unwrap_or(f64::NAN);
    let worst = t.final_split_whiteness.iter().copied().fold(0.0, f64::max);
    let b = t.rows.last().and_then(|r| r.b_orthonormality).unwrap_or(f64::NAN);
    outcome(
        t.aborted.is_none() && final_energy < t.initial_offdiag_energy && worst < 0.1 && within(elapsed, 120),
        format!(
            "off-diagonal energy {:.4} → {final_energy:.4}; split whiteness {:?} (<0.1); ‖BBᵀ−cI‖ {b:.3} (reported); {:.1}s",
            t.initial_offdiag_energy,
            t.final_split_whiteness.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.training.epochs = 100;
    cfg.training.patience = 0;
    cfg.loss.lambda_inv = 25.0 / cfg.model.embedding as f64;
    let g = cfg.dataset.load::<f64>().unwrap();
    let cells = [
        CellSpec { mode: LossMode::Full, node_ratio: 1.0, dim_ratio: 1.0 },
        CellSpec { mode: LossMode::NodeSampled, node_ratio: 0.25, dim_ratio: 1.0 },
        CellSpec { mode: LossMode::DimSampledCovOnly, node_ratio: 1.0, dim_ratio: 0.5 },
        CellSpec { mode: LossMode::Joint, node_ratio: 0.25, dim_ratio: 0.5 },
    ];
    let results: Vec<Option<(f64, f64)>> = cells
        .par_iter()
        .map(|spec| {
            let out = pretrain(&cell_config(&cfg, spec), &g).ok()?;
            out.report.probe.map(|p| (p.mean, p.std))
        })
        .collect();
    let elapsed = started.elapsed();
    let Some(full) = results[0] else {
        return outcome(false, "full-mode run failed".into());
    };
    let mut passed = full.0 > 0.8;
    let mut parts = vec![format!("full {:.4}±{:.4}", full.0, full.1)];
    for (spec, res) in cells.iter().zip(&results).skip(1) {
        match res {
            Some((mean, std)) => {
                passed &= *mean > 0.8 && (mean - full.0).abs() <= 0.03;
                parts.push(format!("{} {:.4}±{:.4}", spec.mode, mean, std));
            }
            None => {
                passed = false;
                parts.push(format!("{} failed", spec.mode));
            }
        }
    }
    passed &= within(elapsed, 900);
    outcome(passed, format!("{} (within 0.03 of full, all >0.80); {:.0}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn chi_square_p(counts: &[u64], expected: f64) -> f64 {
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn samplers() -> Outcome {
    let draws = 100_000u64;
    let mut r = rng(103);
    let (n, k) = (50, 10);
    let mut counts = vec![0u64; n];
    for _ in 0..draws {
        for i in uniform_node_sample(n, k as f64 / n as f64, &mut r).unwrap() {
            counts[i] += 1;
        }
    }
    let p_nodes = chi_square_p(&counts, (draws * k) as f64 / n as f64);
    let (d, m) = (64, 32);
    let mut counts = vec![0u64; d];
    for _ in 0..draws {
        for i in uniform_dim_sample(d, 0.5, &mut r).unwrap() {
            counts[i] += 1;
        }
    }
    let p_dims = chi_square_p(&counts, (draws * m) as f64 / d as f64);
    let probs = ricci_node_probs(&[-1.0, 0.0, 3.0]).unwrap();
    let zeros = |n| Matrix::<f64>::zeros(n, 1);
    let curv = |n, e: Vec<(usize, usize)>| forman_ricci(&Graph::from_edges(n, e, zeros(n), None).unwrap()).edge_curvature;
    let p2 = curv(2, vec![(0, 1)]);
    let k3 = curv(3, vec![(0, 1), (1, 2), (0, 2)]);
    let s4 = curv(5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
    let forman_ok = p2 == [2.0] && k3 == [3.0; 3] && s4 == [-1.0; 4];
    outcome(
        p_nodes > 1e-3 && p_dims > 1e-3 && probs == [0.0, 0.2, 0.8] && forman_ok,
        format!(
            "chi-square p-values nodes {p_nodes:.3}, dims {p_dims:.3} (>1e-3); ricci probs {probs:?}; forman P2 {p2:?} K3 {:?} S4 {:?}",
            k3[0], s4[0]
        ),
    )
}

fn reproducibility() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 42;
    cfg.dataset.sbm.nodes_per_block = 100;
    cfg.model.encoder_hidden = 64;
    cfg.model.representation = 64;
    cfg.model.expander_hidden = 128;
    cfg.model.embedding = 128;
    cfg.loss.lambda_inv = 25.0 / 128.0;
    cfg.training.epochs = 50;
    cfg.sampling.mode = LossMode::Joint;
    cfg.sampling.node_ratio = 0.25;
    cfg.sampling.dim_ratio = 0.5;
    let g = cfg.dataset.load::<f64>().unwrap();
    let run = || pretrain(&cfg, &g).map(|o| o.report);
    let (a, b) = match (run(), run()) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return outcome(false, "pretraining failed".into()),
    };
    let bits = |r: &ExperimentReport| r.trajectory().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let same_traj = bits(&a) == bits(&b) && !a.losses.is_empty();
    let same_report = a.without_timings() == b.without_timings();
    let json_ok = ExperimentReport::from_json(&a.to_json()).ok().as_ref() == Some(&a);
    outcome(
        same_traj && same_report && json_ok,
        format!(
            "{} epochs: bit-identical trajectories {same_traj}, identical reports {same_report}, JSON round-trip {json_ok}",
            a.epochs_run()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "algebraic suite", algebraic),
        (2, "gradient suite", gradients),
        (3, "scaling suite", scaling),
        (4, "rotating-partition experiment", rotating),
        (5, "end-to-end sampling trade-off", end_to_end),
        (6, "sampler statistics", samplers),
        (7, "reproducibility", reproducibility),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let out = run();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id} {name}: {} [{:.1}s]", out.detail, started.elapsed().as_secs_f64());
        failures += usize::from(!out.passed);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
