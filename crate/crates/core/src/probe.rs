//! Linear evaluation: a multinomial logistic-regression probe trained on
//! frozen encoder representations.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::nn::{encode, GcnEncoderParams};
use crate::scalar::Scalar;

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Random split with the given train and validation fractions; the
    /// remainder is the test set.
    pub fn random(n: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
            return Err(Error::Config(format!("bad split fractions {train_frac}/{val_frac}")));
        }
        let n_train = ((train_frac * n as f64).round() as usize).max(1);
        let n_val = if val_frac > 0.0 { ((val_frac * n as f64).round() as usize).max(1) } else { 0 };
        if n_train + n_val >= n {
            return Err(Error::Config(format!("{n} nodes are too few for the requested split")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let sorted = |s: &[usize]| {
            let mut v = s.to_vec();
            v.sort_unstable();
            v
        };
        Ok(Self {
            train: sorted(&order[..n_train]),
            val: sorted(&order[n_train..n_train + n_val]),
            test: sorted(&order[n_train + n_val..]),
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, set) in [("train", &self.train), ("test", &self.test)] {
            if set.is_empty() {
                return Err(Error::Config(format!("{name} split is empty")));
            }
        }
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::Range { what: "split node", index: i, len: n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!("node {i} appears in more than one split")));
            }
        }
        Ok(())
    }
}

/// Probe hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    pub l2: f64,
    /// When nonempty, the l2 coefficient is picked per trial on the validation split.
    pub l2_grid: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub trials: usize,
    pub seed: u64,
    /// Use seed `seed + trial` per trial; otherwise every trial reuses `seed`.
    pub reseed_trials: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.1,
            val_frac: 0.1,
            l2: 1e-4,
            l2_grid: Vec::new(),
            max_iters: 2000,
            tol: 1e-6,
            trials: 10,
            seed: 0,
            reseed_trials: true,
        }
    }
}

/// A single trained probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrial {
    pub test_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Regularized training objective at the returned weights.
    pub train_loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub l2: f64,
}

/// Aggregate over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub mean: f64,
    /// Population standard deviation over trials.
    pub std: f64,
    pub accuracies: Vec<f64>,
    pub l2: Vec<f64>,
}

impl ProbeResult {
    pub fn from_trials(trials: &[ProbeTrial]) -> Self {
        let accuracies: Vec<f64> = trials.iter().map(|t| t.test_accuracy).collect();
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            accuracies,
            l2: trials.iter().map(|t| t.l2).collect(),
        }
    }
}

struct Problem {
    /// Standardized features of the training nodes, row-major.
    x: Matrix<f64>,
    y: Vec<usize>,
    classes: usize,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Problem {
    fn new(h: &Matrix<f64>, labels: &[usize], train: &[usize], classes: usize) -> Self {
        let raw = h.select_rows(train);
        let n = raw.rows() as f64;
        let s = raw.cols();
        let mut mean = vec![0.0; s];
        let mut inv_std = vec![1.0; s];
        for j in 0..s {
            let col = raw.col(j);
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[j] = m;
            if v > 1e-24 {
                inv_std[j] = 1.0 / v.sqrt();
            }
        }
        let mut p = Self {
            x: raw,
            y: train.iter().map(|&i| labels[i]).collect(),
            classes,
            mean,
            inv_std,
        };
        p.x = p.transform(&p.x);
        p
    }

    fn transform(&self, raw: &Matrix<f64>) -> Matrix<f64> {
        Matrix::from_fn(raw.rows(), raw.cols(), |i, j| (raw[(i, j)] - self.mean[j]) * self.inv_std[j])
    }

    /// Objective and gradient at `(w, b)`.
    fn eval(&self, w: &Matrix<f64>, b: &[f64], l2: f64) -> (f64, Matrix<f64>, Vec<f64>) {
        let n = self.x.rows() as f64;
        let mut logits = self.x.matmul(w).expect("probe shapes");
        let mut loss = 0.0;
        for r in 0..logits.rows() {
            let row = logits.row_mut(r);
            for (v, &bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
            loss -= row[self.y[r]].max(1e-300).ln();
            row[self.y[r]] -= 1.0;
        }
        // logits now holds P − Y
        let mut gw = self.x.t_matmul(&logits).expect("probe shapes").scale(1.0 / n);
        gw.add_scaled(l2, w).expect("same shape");
        let mut gb = vec![0.0; self.classes];
        for r in 0..logits.rows() {
            for (g, &v) in gb.iter_mut().zip(logits.row(r)) {
                *g += v / n;
            }
        }
        let reg = 0.5 * l2 * w.data().iter().map(|v| v * v).sum::<f64>();
        (loss / n + reg, gw, gb)
    }

    /// Largest eigenvalue of `XᵀX / n` by power iteration.
    fn gram_spectral_bound(&self) -> f64 {
        let s = self.x.cols();
        let n = self.x.rows() as f64;
        let mut v = Matrix::filled(s, 1, 1.0 / (s as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..50 {
            let xv = self.x.matmul(&v).expect("shapes");
            let w = self.x.t_matmul(&xv).expect("shapes").scale(1.0 / n);
            let norm = w.frobenius_norm();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w.scale(1.0 / norm);
        }
        // power iteration under-estimates; pad it
        lambda * 1.1
    }
}

fn grad_norm(gw: &Matrix<f64>, gb: &[f64]) -> f64 {
    (gw.data().iter().map(|v| v * v).sum::<f64>() + gb.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

fn predict(x: &Matrix<f64>, w: &Matrix<f64>, b: &[f64]) -> Vec<usize> {
    let logits = x.matmul(w).expect("probe shapes");
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (0..row.len())
                .max_by(|&i, &j| (row[i] + b[i]).total_cmp(&(row[j] + b[j])).then(j.cmp(&i)))
                .unwrap_or(0)
        })
        .collect()
}

fn accuracy(pred: &[usize], labels: &[usize], idx: &[usize]) -> f64 {
    let hits = idx.iter().zip(pred).filter(|(&i, &p)| labels[i] == p).count();
    hits as f64 / idx.len() as f64
}

/// Trains one probe by preconditioned accelerated gradient descent
/// (adaptive restart) until the gradient norm drops below `tol` or
/// `max_iters` is hit, and reports test accuracy. `init_seed` randomizes
/// the starting weights; `None` starts from zero.
#[allow(clippy::too_many_arguments)]
pub fn train_probe<T: Scalar>(
    h: &Matrix<T>,
    labels: &[usize],
    split: &SplitSpec,
    l2: f64,
    max_iters: usize,
    tol: f64,
    init_seed: Option<u64>,
) -> Result<ProbeTrial> {
    if h.rows() != labels.len() {
        return Err(Error::shape("train_probe", format!("{} rows, {} labels", h.rows(), labels.len())));
    }
    split.validate(h.rows())?;
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::Config("l2 must be finite and nonnegative".into()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let first = labels[split.train[0]];
    if split.train.iter().all(|&i| labels[i] == first) {
        return Err(Error::Probe("training split contains a single class".into()));
    }
    let h = h.cast::<f64>();
    if !h.is_finite() {
        return Err(Error::NonFinite("probe input representations".into()));
    }
    let prob = Problem::new(&h, labels, &split.train, classes);
    let s = h.cols();

    let mut w = match init_seed {
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(s, classes, |_, _| rng.random_range(-1.0..1.0))
        }
        None => Matrix::zeros(s, classes),
    };
    let mut b = vec![0.0; classes];
    // block step sizes: softmax curvature ≤ 1/2, halved again for the coupling
    let step_w = 1.0 / (2.0 * (0.5 * prob.gram_spectral_bound() + l2)).max(1e-12);
    let step_b = 1.0;

    let (mut w_prev, mut b_prev) = (w.clone(), b.clone());
    let mut momentum_k = 1usize;
    let mut iterations = 0;
    let (mut loss, mut gw, mut gb) = prob.eval(&w, &b, l2);
    while iterations < max_iters && grad_norm(&gw, &gb) >= tol {
        iterations += 1;
        let beta = (momentum_k as f64 - 1.0) / (momentum_k as f64 + 2.0);
        let yw = Matrix::from_fn(s, classes, |i, j| w[(i, j)] + beta * (w[(i, j)] - w_prev[(i, j)]));
        let yb: Vec<f64> = b.iter().zip(&b_prev).map(|(x, xp)| x + beta * (x - xp)).collect();
        let (_, ygw, ygb) = prob.eval(&yw, &yb, l2);
        let nw = Matrix::from_fn(s, classes, |i, j| yw[(i, j)] - step_w * ygw[(i, j)]);
        let nb: Vec<f64> = yb.iter().zip(&ygb).map(|(y, g)| y - step_b * g).collect();
        let (nloss, ngw, ngb) = prob.eval(&nw, &nb, l2);
        if nloss > loss {
            // restart momentum from the current iterate
            momentum_k = 1;
            w_prev = w.clone();
            b_prev = b.clone();
            let nw = Matrix::from_fn(s, classes, |i, j| w[(i, j)] - step_w * gw[(i, j)]);
            let nb: Vec<f64> = b.iter().zip(&gb).map(|(x, g)| x - step_b * g).collect();
            let (l, a, c) = prob.eval(&nw, &nb, l2);
            if l <= loss {
                w = nw;
                b = nb;
                (loss, gw, gb) = (l, a, c);
            }
            continue;
        }
        momentum_k += 1;
        w_prev = std::mem::replace(&mut w, nw);
        b_prev = std::mem::replace(&mut b, nb);
        (loss, gw, gb) = (nloss, ngw, ngb);
    }

    let all = prob.transform(&h);
    let pred = predict(&all, &w, &b);
    let pred_at = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| pred[i]).collect() };
    Ok(ProbeTrial {
        test_accuracy: accuracy(&pred_at(&split.test), labels, &split.test),
        val_accuracy: (!split.val.is_empty()).then(|| accuracy(&pred_at(&split.val), labels, &split.val)),
        train_loss: loss,
        grad_norm: grad_norm(&gw, &gb),
        iterations,
        l2,
    })
}

fn run_trial<T: Scalar>(h: &Matrix<T>, labels: &[usize], cfg: &ProbeConfig, trial: usize) -> Result<ProbeTrial> {
    let seed = if cfg.reseed_trials { cfg.seed.wrapping_add(trial as u64) } else { cfg.seed };
    let split = SplitSpec::random(h.rows(), cfg.train_frac, cfg.val_frac, seed)?;
    if cfg.l2_grid.is_empty() {
        return train_probe(h, labels, &split, cfg.l2, cfg.max_iters, cfg.tol, None);
    }
    let mut best: Option<ProbeTrial> = None;
    for &l2 in &cfg.l2_grid {
        let t = train_probe(h, labels, &split, l2, cfg.max_iters, cfg.tol, None)?;
        let better = match &best {
            None => true,
            Some(b) => t.val_accuracy.unwrap_or(0.0) > b.val_accuracy.unwrap_or(0.0),
        };
        if better {
            best = Some(t);
        }
    }
    Ok(best.expect("grid is nonempty"))
}

/// Probe accuracy of fixed representations over `cfg.trials` splits.
pub fn evaluate_representations<T: Scalar>(h: &Matrix<T>, labels: &[usize], cfg: &ProbeConfig) -> Result<ProbeResult> {
    if cfg.trials == 0 {
        return Err(Error::Config("at least one probe trial is required".into()));
    }
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(h, labels, cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbeResult::from_trials(&trials))
}

/// Freezes `encoder`, encodes the full graph and runs the probe protocol.
pub fn evaluate<T: Scalar>(encoder: &GcnEncoderParams<T>, g: &Graph<T>, cfg: &ProbeConfig) -> Result<ProbeResult> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Probe("graph has no labels".into()))?;
    let h = encode(g, encoder)?;
    evaluate_representations(&h, labels, cfg)
}
