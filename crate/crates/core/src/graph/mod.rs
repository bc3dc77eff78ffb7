//! Graph data model, synthetic generation, file loading and view augmentation.

mod augment;
mod io;
mod sbm;

pub use augment::{augment, AugmentationConfig, MaskMode, ViewPair};
pub use io::load_graph;
pub use sbm::{generate_sbm, SbmConfig};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Undirected simple graph with dense node features.
///
/// Neighbor lists are sorted, deduplicated, symmetric and free of
/// self-loops. Instances are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph<T> {
    neighbors: Vec<Vec<usize>>,
    features: Matrix<T>,
    labels: Option<Vec<usize>>,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from an undirected edge list. Edges are symmetrized,
    /// duplicates collapse and self-loops are dropped.
    pub fn from_edges(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix<T>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            for x in [u, v] {
                if x >= num_nodes {
                    return Err(Error::Range {
                        what: "node id",
                        index: x,
                        len: num_nodes,
                    });
                }
            }
            if u == v {
                continue;
            }
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Self::from_neighbors(neighbors, features, labels)
    }

    /// Builds a graph from adjacency lists, checking every structural invariant.
    pub fn from_neighbors(
        neighbors: Vec<Vec<usize>>,
        features: Matrix<T>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = neighbors.len();
        if features.rows() != n {
            return Err(Error::shape(
                "Graph",
                format!("{} feature rows for {n} nodes", features.rows()),
            ));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("node features".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::shape("Graph", format!("{} labels for {n} nodes", l.len())));
            }
        }
        for (i, list) in neighbors.iter().enumerate() {
            for w in list.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Config(format!("neighbors of {i} not sorted/unique")));
                }
            }
            for &j in list {
                if j >= n {
                    return Err(Error::Range {
                        what: "node id",
                        index: j,
                        len: n,
                    });
                }
                if j == i {
                    return Err(Error::Config(format!("self-loop at node {i}")));
                }
                if neighbors[j].binary_search(&i).is_err() {
                    return Err(Error::Config(format!("edge {i}-{j} is not symmetric")));
                }
            }
        }
        Ok(Self {
            neighbors,
            features,
            labels,
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    #[inline]
    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1)
    }

    /// Full scan of the symmetry invariant.
    pub fn is_symmetric(&self) -> bool {
        self.neighbors
            .iter()
            .enumerate()
            .all(|(i, list)| list.iter().all(|&j| self.has_edge(j, i)))
    }

    /// Same topology and labels with replaced features.
    pub(crate) fn with_parts(&self, neighbors: Vec<Vec<usize>>, features: Matrix<T>) -> Self {
        Self {
            neighbors,
            features,
            labels: self.labels.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Graph<U> {
        Graph {
            neighbors: self.neighbors.clone(),
            features: self.features.cast(),
            labels: self.labels.clone(),
        }
    }
}
