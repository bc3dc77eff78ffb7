//! Binary checkpoint of named tensors.
//!
//! Layout (little-endian): magic `VSCK`, format version `u32`, element
//! width in bytes `u32`, tensor count `u32`, then per tensor: name length
//! `u32`, UTF-8 name, rows `u64`, cols `u64`, raw values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::Model;
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"VSCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub value: Matrix<T>,
}

pub fn write_checkpoint<T: Scalar>(tensors: &[NamedTensor<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(T::BYTES as u32).to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.value.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.value.cols() as u64).to_le_bytes());
        for &v in t.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")) as usize)
    }
}

pub fn read_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Vec<NamedTensor<T>>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let width = r.u32()? as usize;
    if width != T::BYTES {
        return Err(Error::Checkpoint(format!(
            "stored with {width}-byte scalars, reading as {}",
            T::PRECISION
        )));
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let (rows, cols) = (r.u64()?, r.u64()?);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?;
        let raw = r.take(n.checked_mul(width).ok_or_else(|| Error::Checkpoint("tensor size overflows".into()))?)?;
        let data = raw.chunks_exact(width).map(T::read_le).collect();
        out.push(NamedTensor {
            name,
            value: Matrix::from_vec(rows, cols, data)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(out)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    let tensors: Vec<_> = Model::<T>::TENSOR_NAMES
        .iter()
        .zip(model.tensors())
        .map(|(name, m)| NamedTensor {
            name: name.to_string(),
            value: m.clone(),
        })
        .collect();
    fs::write(path, write_checkpoint(&tensors)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut tensors = read_checkpoint::<T>(&bytes)?;
    let mut take = |name: &str| -> Result<Matrix<T>> {
        let pos = tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        Ok(tensors.swap_remove(pos).value)
    };
    let [a, b, c, d, e, f] = Model::<T>::TENSOR_NAMES;
    Ok(Model {
        encoder: crate::nn::GcnEncoderParams { w1: take(a)?, w2: take(b)? },
        expander: crate::nn::ExpanderParams {
            w1: take(c)?,
            b1: take(d)?,
            w2: take(e)?,
            b2: take(f)?,
        },
    })
}
