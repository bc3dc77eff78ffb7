use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, Matrix};
use crate::objective::{LossBreakdown, LossMode, LossWeights, TermTimings};
use crate::sampling::SamplingPlan;
use crate::scalar::Scalar;

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

enum Op<T> {
    Constant,
    Param(usize),
    MatMul(usize, usize),
    SpMM(Arc<CsrMatrix<T>>, usize),
    AddRowBias(usize, usize),
    Relu(usize),
    Add(usize, usize),
    Scale(usize, T),
    Sum(usize),
    SquaredNorm(usize),
    /// Scalar output whose input gradients were computed in the forward pass.
    Fused(Vec<(usize, Matrix<T>)>),
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// Records primitive operations so a scalar output can be differentiated
/// with respect to every registered parameter.
pub struct Tape<T> {
    id: u64,
    nodes: Vec<Node<T>>,
    num_params: usize,
}

/// Parameter gradients indexed by the key given to [`Tape::param`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
    visited: usize,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, key: usize) -> Option<&Matrix<T>> {
        self.grads.get(key).and_then(Option::as_ref)
    }

    /// Number of tape nodes the backward sweep processed.
    pub fn nodes_visited(&self) -> usize {
        self.visited
    }

    pub fn into_vec(self) -> Vec<Option<Matrix<T>>> {
        self.grads
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            num_params: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(Error::Tape("variable does not belong to this tape".into()));
        }
        Ok(v.idx)
    }

    pub fn value(&self, v: Var) -> Result<&Matrix<T>> {
        Ok(&self.nodes[self.idx(v)?].value)
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Constant)
    }

    /// Registers a trainable leaf whose gradient is reported under `key`.
    pub fn param(&mut self, key: usize, value: Matrix<T>) -> Var {
        self.num_params = self.num_params.max(key + 1);
        self.push(value, Op::Param(key))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::MatMul(ia, ib)))
    }

    /// Constant sparse matrix times a recorded dense value.
    pub fn spmm(&mut self, s: &Arc<CsrMatrix<T>>, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = s.matmul_dense(&self.nodes[ix].value)?;
        Ok(self.push(v, Op::SpMM(Arc::clone(s), ix)))
    }

    /// Adds a `1 × cols` bias to every row.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x)?, self.idx(bias)?);
        let (xv, bv) = (&self.nodes[ix].value, &self.nodes[ib].value);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape("add_row_bias", format!("{:?} + {:?}", xv.shape(), bv.shape())));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(bv.row(0)) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRowBias(ix, ib)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.nodes[ix].value.map(|a| a.max(T::zero()));
        Ok(self.push(v, Op::Relu(ix)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.add(&self.nodes[ib].value)?;
        Ok(self.push(v, Op::Add(ia, ib)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.nodes[ix].value.scale(c);
        Ok(self.push(v, Op::Scale(ix, c)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = Matrix::filled(1, 1, self.nodes[ix].value.sum());
        Ok(self.push(v, Op::Sum(ix)))
    }

    /// Squared Frobenius norm.
    pub fn squared_norm(&mut self, x: Var) -> Result<Var> {
        let ix = self.idx(x)?;
        let v = self.nodes[ix].value.data().iter().map(|&a| a * a).sum();
        Ok(self.push(Matrix::filled(1, 1, v), Op::SquaredNorm(ix)))
    }

    /// Records a scalar with caller-supplied gradients for its inputs.
    pub fn fused(&mut self, value: T, inputs: Vec<(Var, Matrix<T>)>) -> Result<Var> {
        let mut recorded = Vec::with_capacity(inputs.len());
        for (v, g) in inputs {
            let i = self.idx(v)?;
            if g.shape() != self.nodes[i].value.shape() {
                return Err(Error::shape(
                    "fused",
                    format!("gradient {:?} for value {:?}", g.shape(), self.nodes[i].value.shape()),
                ));
            }
            recorded.push((i, g));
        }
        Ok(self.push(Matrix::filled(1, 1, value), Op::Fused(recorded)))
    }

    pub fn invariance(&mut self, z1: Var, z2: Var, nodes: Option<&[usize]>) -> Result<Var> {
        let (a, b) = (self.value(z1)?, self.value(z2)?);
        let value = crate::objective::invariance_loss(a, b, nodes)?;
        let (g1, g2) = crate::objective::invariance_grad(a, b, nodes)?;
        self.fused(value, vec![(z1, g1), (z2, g2)])
    }

    pub fn variance(&mut self, z: Var, eps: T, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> Result<Var> {
        let zv = self.value(z)?;
        let value = crate::objective::variance_loss(zv, eps, nodes, dims)?;
        let g = crate::objective::variance_grad(zv, eps, nodes, dims)?;
        self.fused(value, vec![(z, g)])
    }

    pub fn covariance(&mut self, z: Var, nodes: Option<&[usize]>, dims: Option<&[usize]>) -> Result<Var> {
        let (value, g) = crate::objective::covariance_value_grad(self.value(z)?, nodes, dims)?;
        self.fused(value, vec![(z, g)])
    }

    /// The combined objective on two recorded embeddings.
    pub fn vicreg(
        &mut self,
        z1: Var,
        z2: Var,
        weights: &LossWeights,
        plan: &SamplingPlan,
        mode: LossMode,
    ) -> Result<(Var, LossBreakdown<T>, TermTimings)> {
        let (bd, g1, g2, timings) =
            crate::objective::vicreg_value_grad(self.value(z1)?, self.value(z2)?, weights, plan, mode)?;
        let loss = self.fused(bd.total, vec![(z1, g1), (z2, g2)])?;
        Ok((loss, bd, timings))
    }

    /// Backpropagates the scalar `loss` to every parameter it depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Tape("backward called before any forward computation".into()));
        }
        let root = self.idx(loss)?;
        if self.nodes[root].value.shape() != (1, 1) {
            return Err(Error::Tape(format!(
                "loss must be a 1x1 scalar, got {:?}",
                self.nodes[root].value.shape()
            )));
        }
        let mut adj: Vec<Option<Matrix<T>>> = (0..=root).map(|_| None).collect();
        adj[root] = Some(Matrix::filled(1, 1, T::one()));
        let mut params: Vec<Option<Matrix<T>>> = (0..self.num_params).map(|_| None).collect();
        let mut visited = 0;

        for i in (0..=root).rev() {
            let Some(g) = adj[i].take() else { continue };
            visited += 1;
            let accumulate = |adj: &mut Vec<Option<Matrix<T>>>, j: usize, delta: Matrix<T>| -> Result<()> {
                match &mut adj[j] {
                    Some(existing) => existing.add_scaled(T::one(), &delta),
                    slot => {
                        *slot = Some(delta);
                        Ok(())
                    }
                }
            };
            match &self.nodes[i].op {
                Op::Constant => {}
                Op::Param(key) => match &mut params[*key] {
                    Some(existing) => existing.add_scaled(T::one(), &g)?,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(&self.nodes[*b].value)?;
                    let gb = self.nodes[*a].value.t_matmul(&g)?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::SpMM(s, x) => accumulate(&mut adj, *x, s.t_matmul_dense(&g)?)?,
                Op::AddRowBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *b, gb)?;
                    accumulate(&mut adj, *x, g)?;
                }
                Op::Relu(x) => {
                    let gx = g.zip_map(&self.nodes[*x].value, |gv, xv| if xv > T::zero() { gv } else { T::zero() })?;
                    accumulate(&mut adj, *x, gx)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g)?;
                }
                Op::Scale(x, c) => accumulate(&mut adj, *x, g.scale(*c))?,
                Op::Sum(x) => {
                    let (r, c) = self.nodes[*x].value.shape();
                    accumulate(&mut adj, *x, Matrix::filled(r, c, g[(0, 0)]))?;
                }
                Op::SquaredNorm(x) => {
                    let s = T::of(2.0) * g[(0, 0)];
                    accumulate(&mut adj, *x, self.nodes[*x].value.scale(s))?;
                }
                Op::Fused(inputs) => {
                    let up = g[(0, 0)];
                    for (j, local) in inputs {
                        accumulate(&mut adj, *j, local.scale(up))?;
                    }
                }
            }
        }
        Ok(Gradients { grads: params, visited })
    }
}
