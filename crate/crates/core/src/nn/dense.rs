use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

use super::conv::dot;

/// Fully connected layer, `out = weights · input + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f32> {
    weights: Tensor<T>,
    bias: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    /// `weights` is `[out_units × in_units]`.
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::shape(format!(
                "dense weights must be [out × in], got {:?}",
                weights.shape()
            )));
        }
        if bias.shape() != [weights.dim(0)] {
            return Err(Error::shape(format!(
                "dense bias shape {:?} does not match {} output units",
                bias.shape(),
                weights.dim(0)
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn in_units(&self) -> usize {
        self.weights.dim(1)
    }

    pub fn out_units(&self) -> usize {
        self.weights.dim(0)
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Tensor<T>, &mut Tensor<T>) {
        (&mut self.weights, &mut self.bias)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.in_units() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {len}",
                self.in_units()
            )));
        }
        Ok(())
    }

    /// Accepts any tensor whose element count equals `in_units`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Tensor::from_vec(self.forward_slice(input.data())?)
    }

    pub(crate) fn forward_slice(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        let n_in = self.in_units();
        Ok(self
            .weights
            .data()
            .chunks_exact(n_in)
            .zip(self.bias.data())
            .map(|(w_row, &b)| b + dot(w_row, x))
            .collect())
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let mut gw = Tensor::zeros(self.weights.shape());
        let mut gb = Tensor::zeros(self.bias.shape());
        let gi = self.backward_into(input.data(), grad_out.data(), gw.data_mut(), gb.data_mut())?;
        Ok(DenseGrads {
            input: Tensor::new(input.shape().to_vec(), gi)?,
            weights: gw,
            bias: gb,
        })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward_into(
        &self,
        x: &[T],
        g: &[T],
        grad_weights: &mut [T],
        grad_bias: &mut [T],
    ) -> Result<Vec<T>> {
        self.check_len(x.len())?;
        if g.len() != self.out_units() {
            return Err(Error::shape(format!(
                "dense grad_out has {} entries, layer has {} outputs",
                g.len(),
                self.out_units()
            )));
        }
        let n_in = self.in_units();
        let mut gi = vec![T::zero(); n_in];
        for (o, &go) in g.iter().enumerate() {
            grad_bias[o] = grad_bias[o] + go;
            let gw_row = &mut grad_weights[o * n_in..(o + 1) * n_in];
            for (dst, &xv) in gw_row.iter_mut().zip(x) {
                *dst = *dst + go * xv;
            }
            let w_row = &self.weights.data()[o * n_in..(o + 1) * n_in];
            for (dst, &wv) in gi.iter_mut().zip(w_row) {
                *dst = *dst + go * wv;
            }
        }
        Ok(gi)
    }
}
