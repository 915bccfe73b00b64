use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

use super::conv::window_output_len;

/// Max pooling over the length axis of a `[channels × length]` map.
/// Trailing elements that do not fill a window are dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pool_len: usize,
    stride: usize,
}

/// Winning positions from a forward pass, as flat indices into the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

impl MaxPool1d {
    pub fn new(pool_len: usize, stride: usize) -> Result<Self> {
        if pool_len == 0 || stride == 0 {
            return Err(Error::Architecture(format!(
                "pool length and stride must be >= 1, got {pool_len}/{stride}"
            )));
        }
        Ok(Self { pool_len, stride })
    }

    pub fn pool_len(&self) -> usize {
        self.pool_len
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        window_output_len(input_len, self.pool_len, self.stride)
    }

    pub fn forward<T: Real>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
        let shape = input.shape();
        if shape.len() != 2 {
            return Err(Error::shape(format!("pool expects [C × L], got {shape:?}")));
        }
        let (channels, len) = (shape[0], shape[1]);
        let out_len = self.output_len(len).ok_or_else(|| {
            Error::shape(format!(
                "pool input length {len} shorter than window {}",
                self.pool_len
            ))
        })?;
        let x = input.data();
        let mut out = Vec::with_capacity(channels * out_len);
        let mut argmax = Vec::with_capacity(channels * out_len);
        for c in 0..channels {
            for j in 0..out_len {
                let start = c * len + j * self.stride;
                let mut best = start;
                for idx in start + 1..start + self.pool_len {
                    // strict comparison keeps the first maximum on ties
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
        let indices = PoolIndices {
            input_shape: shape.to_vec(),
            output_shape: vec![channels, out_len],
            argmax,
        };
        Ok((Tensor::new(vec![channels, out_len], out)?, indices))
    }
}

/// Routes each upstream gradient to the position that won its window.
pub fn maxpool1d_backward<T: Real>(
    indices: &PoolIndices,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != indices.output_shape.as_slice() {
        return Err(Error::shape(format!(
            "pool grad_out shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            indices.output_shape
        )));
    }
    let mut grad_in = Tensor::zeros(&indices.input_shape);
    let n = grad_in.len();
    let gi = grad_in.data_mut();
    for (&idx, &g) in indices.argmax.iter().zip(grad_out.data()) {
        if idx >= n {
            return Err(Error::Internal(format!(
                "pool argmax {idx} out of range for input of {n}"
            )));
        }
        gi[idx] = gi[idx] + g;
    }
    Ok(grad_in)
}
