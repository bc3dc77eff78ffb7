use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::{check_ratio, sample_count};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

/// Triangle-augmented Forman curvature per edge and its per-node aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct RicciScores {
    /// Undirected edges `(u, v)`, `u < v`, aligned with `edge_curvature`.
    pub edges: Vec<(usize, usize)>,
    pub edge_curvature: Vec<f64>,
    /// Sum of curvatures of the edges incident to each node.
    pub node_flow: Vec<f64>,
    pub probs: Vec<f64>,
}

fn count_common(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// `F(u,v) = 4 − deg(u) − deg(v) + 3·t(u,v)` where `t` counts the
/// triangles through the edge. Node selection probabilities are filled
/// from the resulting flows.
pub fn forman_ricci<T: Scalar>(g: &Graph<T>) -> RicciScores {
    let n = g.num_nodes();
    let mut edges = Vec::with_capacity(g.num_edges());
    let mut edge_curvature = Vec::with_capacity(g.num_edges());
    let mut node_flow = vec![0.0; n];
    for (u, v) in g.edges() {
        let triangles = count_common(g.neighbors(u), g.neighbors(v));
        let f = 4.0 - g.degree(u) as f64 - g.degree(v) as f64 + 3.0 * triangles as f64;
        edges.push((u, v));
        edge_curvature.push(f);
        node_flow[u] += f;
        node_flow[v] += f;
    }
    let probs = if n == 0 { Vec::new() } else { ricci_node_probs(&node_flow).unwrap_or_default() };
    RicciScores {
        edges,
        edge_curvature,
        node_flow,
        probs,
    }
}

/// Shift flows so the minimum is zero and normalize by the shifted sum.
/// Equal flows give the uniform distribution.
pub fn ricci_node_probs(flows: &[f64]) -> Result<Vec<f64>> {
    if flows.is_empty() {
        return Err(Error::Config("cannot build node probabilities for an empty graph".into()));
    }
    if flows.iter().any(|f| !f.is_finite()) {
        return Err(Error::NonFinite("node Ricci flow".into()));
    }
    let min = flows.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = flows.iter().map(|f| f - min).collect();
    let total: f64 = shifted.iter().sum();
    if total <= 0.0 {
        return Ok(vec![1.0 / flows.len() as f64; flows.len()]);
    }
    Ok(shifted.into_iter().map(|s| s / total).collect())
}

/// Draws `round(p·N)` distinct nodes proportionally to `probs`, equivalent
/// to sequential draws with renormalization (exponential-key method).
/// When fewer nodes carry positive mass than requested, the remainder is
/// filled uniformly from the zero-mass nodes.
pub fn ricci_node_sample<R: Rng + ?Sized>(probs: &[f64], p: f64, rng: &mut R) -> Result<Vec<usize>> {
    check_ratio("node ratio", p)?;
    let n = probs.len();
    if n == 0 {
        return Err(Error::Config("cannot sample from an empty graph".into()));
    }
    if probs.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(Error::Config("node probabilities must be finite and nonnegative".into()));
    }
    let k = sample_count(n, p)?;

    // key = ln(u) / w; the k largest keys form the sample
    let mut keyed: Vec<(f64, usize)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut chosen: Vec<usize> = keyed.iter().take(k).map(|&(_, i)| i).collect();

    if chosen.len() < k {
        let missing = k - chosen.len();
        log::warn!(
            "only {} nodes have positive Ricci probability, padding {missing} uniformly",
            chosen.len()
        );
        let zero_mass: Vec<usize> = (0..n).filter(|&i| probs[i] == 0.0).collect();
        let extra = rand::seq::index::sample(rng, zero_mass.len(), missing);
        chosen.extend(extra.into_iter().map(|j| zero_mass[j]));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

impl RicciScores {
    /// Writes `u,v,curvature` rows and `node,flow,prob` rows to two CSV files.
    pub fn write_csv(&self, edges_path: &Path, nodes_path: &Path) -> Result<()> {
        let mut e = String::from("u,v,curvature\n");
        for (&(u, v), c) in self.edges.iter().zip(&self.edge_curvature) {
            e.push_str(&format!("{u},{v},{c}\n"));
        }
        let mut nodes = String::from("node,flow,prob\n");
        for (i, (f, p)) in self.node_flow.iter().zip(&self.probs).enumerate() {
            nodes.push_str(&format!("{i},{f},{p}\n"));
        }
        for (path, body) in [(edges_path, e), (nodes_path, nodes)] {
            fs::File::create(path)
                .and_then(|mut f| f.write_all(body.as_bytes()))
                .map_err(|err| Error::io(path, err))?;
        }
        Ok(())
    }
}
