use std::fs;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Loads a graph from an edge list, a headerless feature CSV and an
/// optional label file. The node count is the number of feature rows.
pub fn load_graph<T: Scalar>(
    edge_list: impl AsRef<Path>,
    features: impl AsRef<Path>,
    labels: Option<&Path>,
) -> Result<Graph<T>> {
    let x = read_features::<T>(features.as_ref())?;
    let n = x.rows();
    let edges = read_edges(edge_list.as_ref(), n)?;
    let labels = labels.map(|p| read_labels(p, n)).transpose()?;
    Graph::from_edges(n, edges, x, labels)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| parse_err(path, lineno, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| parse_err(path, lineno, format!("'{tok}' is not a node id")))
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(parse_err(path, lineno, "expected exactly two node ids"));
        }
        for x in [u, v] {
            if x >= n {
                return Err(Error::Range {
                    what: "node id",
                    index: x,
                    len: n,
                });
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    let text = read(path)?;
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map(T::of)
                    .map_err(|_| parse_err(path, lineno, format!("'{tok}' is not a number")))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read(path)?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, format!("'{}' is not a class id", l.trim())))
        })
        .collect::<Result<Vec<usize>>>()?;
    if labels.len() != n {
        return Err(Error::shape("load_graph", format!("{} labels for {n} nodes", labels.len())));
    }
    Ok(labels)
}
