use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{CsrMatrix, Matrix};
use crate::scalar::Scalar;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degrees of `A + I`.
pub fn normalize_adjacency<T: Scalar>(g: &Graph<T>) -> CsrMatrix<T> {
    let n = g.num_nodes();
    let deg: Vec<T> = (0..n).map(|i| T::of_usize(g.degree(i) + 1)).collect();
    let weight = |i: usize, j: usize| T::one() / (deg[i] * deg[j]).sqrt();
    let rows = (0..n)
        .map(|i| {
            let nb = g.neighbors(i);
            let split = nb.partition_point(|&j| j < i);
            let mut row = Vec::with_capacity(nb.len() + 1);
            row.extend(nb[..split].iter().map(|&j| (j, weight(i, j))));
            row.push((i, weight(i, i)));
            row.extend(nb[split..].iter().map(|&j| (j, weight(i, j))));
            row
        })
        .collect();
    CsrMatrix::from_rows(n, rows).expect("neighbor lists are sorted and in range")
}

/// Layer widths of the encoder and expander.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub input: usize,
    pub encoder_hidden: usize,
    pub representation: usize,
    pub expander_hidden: usize,
    pub embedding: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            input: 0,
            encoder_hidden: 256,
            representation: 256,
            expander_hidden: 512,
            embedding: 512,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if [
            self.input,
            self.encoder_hidden,
            self.representation,
            self.expander_hidden,
            self.embedding,
        ]
        .contains(&0)
        {
            return Err(Error::Config(format!("all layer widths must be positive: {self:?}")));
        }
        Ok(())
    }
}

fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::of(rng.random_range(-limit..limit)))
}

/// Two-layer GCN weights (no biases): `H = Â·ReLU(Â·X·W₁)·W₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoderParams<T> {
    pub w1: Matrix<T>,
    pub w2: Matrix<T>,
}

impl<T: Scalar> GcnEncoderParams<T> {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(input, hidden, rng),
            w2: glorot(hidden, output, rng),
        }
    }

    fn check(&self, input: usize) -> Result<()> {
        if self.w1.rows() != input || self.w1.cols() != self.w2.rows() {
            return Err(Error::shape(
                "encode",
                format!("features {input}, W1 {:?}, W2 {:?}", self.w1.shape(), self.w2.shape()),
            ));
        }
        Ok(())
    }
}

/// Affine → ReLU → affine projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpanderParams<T> {
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

impl<T: Scalar> ExpanderParams<T> {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: glorot(hidden, output, rng),
            b2: Matrix::zeros(1, output),
        }
    }

    fn check(&self, input: usize) -> Result<()> {
        let ok = self.w1.rows() == input
            && self.b1.shape() == (1, self.w1.cols())
            && self.w2.rows() == self.w1.cols()
            && self.b2.shape() == (1, self.w2.cols());
        if !ok {
            return Err(Error::shape("expand", format!("input width {input} does not chain with {self:?}")));
        }
        Ok(())
    }
}

/// Encoder and expander; one parameter set shared by both views.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub encoder: GcnEncoderParams<T>,
    pub expander: ExpanderParams<T>,
}

/// Tape handles for every model tensor.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub enc_w1: Var,
    pub enc_w2: Var,
    pub exp_w1: Var,
    pub exp_b1: Var,
    pub exp_w2: Var,
    pub exp_b2: Var,
}

impl<T: Scalar> Model<T> {
    pub const TENSOR_NAMES: [&'static str; 6] = [
        "encoder.w1",
        "encoder.w2",
        "expander.w1",
        "expander.b1",
        "expander.w2",
        "expander.b2",
    ];

    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            encoder: GcnEncoderParams::init(dims.input, dims.encoder_hidden, dims.representation, rng),
            expander: ExpanderParams::init(dims.representation, dims.expander_hidden, dims.embedding, rng),
        })
    }

    /// Tensors in `TENSOR_NAMES` order; the index is the tape parameter key.
    pub fn tensors(&self) -> [&Matrix<T>; 6] {
        [
            &self.encoder.w1,
            &self.encoder.w2,
            &self.expander.w1,
            &self.expander.b1,
            &self.expander.w2,
            &self.expander.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix<T>; 6] {
        [
            &mut self.encoder.w1,
            &mut self.encoder.w2,
            &mut self.expander.w1,
            &mut self.expander.b1,
            &mut self.expander.w2,
            &mut self.expander.b2,
        ]
    }

    pub fn register(&self, tape: &mut Tape<T>) -> ModelVars {
        let [a, b, c, d, e, f] = self.tensors();
        ModelVars {
            enc_w1: tape.param(0, a.clone()),
            enc_w2: tape.param(1, b.clone()),
            exp_w1: tape.param(2, c.clone()),
            exp_b1: tape.param(3, d.clone()),
            exp_w2: tape.param(4, e.clone()),
            exp_b2: tape.param(5, f.clone()),
        }
    }

    /// Records encoder and expander for one view; returns `(H, Z)`.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &ModelVars,
        adj: &Arc<CsrMatrix<T>>,
        features: &Matrix<T>,
    ) -> Result<(Var, Var)> {
        self.encoder.check(features.cols())?;
        self.expander.check(self.encoder.w2.cols())?;
        let x = tape.constant(features.clone());
        let xw = tape.matmul(x, vars.enc_w1)?;
        let h1 = tape.spmm(adj, xw)?;
        let h1 = tape.relu(h1)?;
        let hw = tape.matmul(h1, vars.enc_w2)?;
        let h = tape.spmm(adj, hw)?;
        let e1 = tape.matmul(h, vars.exp_w1)?;
        let e1 = tape.add_row_bias(e1, vars.exp_b1)?;
        let e1 = tape.relu(e1)?;
        let z = tape.matmul(e1, vars.exp_w2)?;
        let z = tape.add_row_bias(z, vars.exp_b2)?;
        Ok((h, z))
    }

    /// FNV-1a over the raw bits of every tensor.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut buf = Vec::new();
        for t in self.tensors() {
            buf.clear();
            for &v in t.data() {
                v.write_le(&mut buf);
            }
            for &b in &buf {
                h ^= b as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        h
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            encoder: GcnEncoderParams {
                w1: self.encoder.w1.cast(),
                w2: self.encoder.w2.cast(),
            },
            expander: ExpanderParams {
                w1: self.expander.w1.cast(),
                b1: self.expander.b1.cast(),
                w2: self.expander.w2.cast(),
                b2: self.expander.b2.cast(),
            },
        }
    }
}

/// `Â·ReLU(Â·X·W₁)·W₂` with a precomputed normalized adjacency.
pub fn encode_with<T: Scalar>(adj: &CsrMatrix<T>, x: &Matrix<T>, params: &GcnEncoderParams<T>) -> Result<Matrix<T>> {
    params.check(x.cols())?;
    if adj.n_rows() != x.rows() {
        return Err(Error::shape("encode", format!("{} nodes vs {} feature rows", adj.n_rows(), x.rows())));
    }
    let h1 = adj.matmul_dense(&x.matmul(&params.w1)?)?.map(|v| v.max(T::zero()));
    adj.matmul_dense(&h1.matmul(&params.w2)?)
}

/// Encoder representations of every node of `g`.
pub fn encode<T: Scalar>(g: &Graph<T>, params: &GcnEncoderParams<T>) -> Result<Matrix<T>> {
    encode_with(&normalize_adjacency(g), g.features(), params)
}

/// Expander output `ReLU(H·W₁ + b₁)·W₂ + b₂`.
pub fn expand<T: Scalar>(h: &Matrix<T>, params: &ExpanderParams<T>) -> Result<Matrix<T>> {
    params.check(h.cols())?;
    let mut e1 = h.matmul(&params.w1)?;
    add_bias(&mut e1, &params.b1);
    let e1 = e1.map(|v| v.max(T::zero()));
    let mut z = e1.matmul(&params.w2)?;
    add_bias(&mut z, &params.b2);
    Ok(z)
}

fn add_bias<T: Scalar>(x: &mut Matrix<T>, b: &Matrix<T>) {
    for r in 0..x.rows() {
        for (o, &v) in x.row_mut(r).iter_mut().zip(b.row(0)) {
            *o += v;
        }
    }
}
