use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Output length of a valid (unpadded) sliding window.
pub fn window_output_len(len: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || len < window {
        None
    } else {
        Some((len - window) / stride + 1)
    }
}

/// 1D convolution over a `[channels × length]` signal with valid padding.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T = f32> {
    kernels: Tensor<T>,
    bias: Tensor<T>,
    stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Conv1d<T> {
    /// `kernels` is `[out_channels × in_channels × kernel_len]`.
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        if kernels.shape().len() != 3 {
            return Err(Error::shape(format!(
                "conv kernels must be rank 3 [out × in × len], got {:?}",
                kernels.shape()
            )));
        }
        if bias.shape() != [kernels.dim(0)] {
            return Err(Error::shape(format!(
                "conv bias shape {:?} does not match {} output channels",
                bias.shape(),
                kernels.dim(0)
            )));
        }
        if stride == 0 {
            return Err(Error::Architecture("conv stride must be >= 1".into()));
        }
        Ok(Self {
            kernels,
            bias,
            stride,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.dim(1)
    }

    pub fn kernel_len(&self) -> usize {
        self.kernels.dim(2)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn kernels(&self) -> &Tensor<T> {
        &self.kernels
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Tensor<T>, &mut Tensor<T>) {
        (&mut self.kernels, &mut self.bias)
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        window_output_len(input_len, self.kernel_len(), self.stride)
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize)> {
        let shape = input.shape();
        if shape.len() != 2 || shape[0] != self.in_channels() {
            return Err(Error::shape(format!(
                "conv expects input [{} × L], got {shape:?}",
                self.in_channels()
            )));
        }
        let out_len = self.output_len(shape[1]).ok_or_else(|| {
            Error::shape(format!(
                "conv input length {} shorter than kernel length {}",
                shape[1],
                self.kernel_len()
            ))
        })?;
        Ok((shape[1], out_len))
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (in_len, out_len) = self.check_input(input)?;
        let (c_out, c_in, k_len) = (self.out_channels(), self.in_channels(), self.kernel_len());
        let x = input.data();
        let w = self.kernels.data();
        let mut out = vec![T::zero(); c_out * out_len];
        for (o, out_row) in out.chunks_exact_mut(out_len).enumerate() {
            out_row.fill(self.bias.data()[o]);
            for c in 0..c_in {
                let x_row = &x[c * in_len..(c + 1) * in_len];
                let w_row = &w[(o * c_in + c) * k_len..(o * c_in + c + 1) * k_len];
                for (k, &wk) in w_row.iter().enumerate() {
                    if self.stride == 1 {
                        for (y, &xv) in out_row.iter_mut().zip(&x_row[k..k + out_len]) {
                            *y = *y + wk * xv;
                        }
                    } else {
                        for (j, y) in out_row.iter_mut().enumerate() {
                            *y = *y + wk * x_row[j * self.stride + k];
                        }
                    }
                }
            }
        }
        Tensor::new(vec![c_out, out_len], out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let mut gk = Tensor::zeros(self.kernels.shape());
        let mut gb = Tensor::zeros(self.bias.shape());
        let gi = self.backward_into(input, grad_out, gk.data_mut(), gb.data_mut(), true)?;
        Ok(ConvGrads {
            input: gi.expect("input gradient requested"),
            kernels: gk,
            bias: gb,
        })
    }

    /// Accumulates parameter gradients into `grad_kernels`/`grad_bias` and
    /// returns the input gradient when `want_input` is set.
    pub(crate) fn backward_into(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad_kernels: &mut [T],
        grad_bias: &mut [T],
        want_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        let (in_len, out_len) = self.check_input(input)?;
        let (c_out, c_in, k_len) = (self.out_channels(), self.in_channels(), self.kernel_len());
        if grad_out.shape() != [c_out, out_len] {
            return Err(Error::shape(format!(
                "conv grad_out must be [{c_out} × {out_len}], got {:?}",
                grad_out.shape()
            )));
        }
        debug_assert_eq!(grad_kernels.len(), self.kernels.len());
        debug_assert_eq!(grad_bias.len(), c_out);
        let x = input.data();
        let w = self.kernels.data();
        let g = grad_out.data();
        let s = self.stride;
        let mut gi = want_input.then(|| vec![T::zero(); c_in * in_len]);

        for o in 0..c_out {
            let g_row = &g[o * out_len..(o + 1) * out_len];
            grad_bias[o] = grad_bias[o] + g_row.iter().copied().sum::<T>();
            for c in 0..c_in {
                let base = (o * c_in + c) * k_len;
                let x_row = &x[c * in_len..(c + 1) * in_len];
                for k in 0..k_len {
                    let acc: T = if s == 1 {
                        dot(g_row, &x_row[k..k + out_len])
                    } else {
                        (0..out_len).map(|j| g_row[j] * x_row[j * s + k]).sum()
                    };
                    grad_kernels[base + k] = grad_kernels[base + k] + acc;
                }
                if let Some(gi) = gi.as_mut() {
                    let gi_row = &mut gi[c * in_len..(c + 1) * in_len];
                    for k in 0..k_len {
                        let wk = w[base + k];
                        if s == 1 {
                            for (dst, &gv) in gi_row[k..k + out_len].iter_mut().zip(g_row) {
                                *dst = *dst + wk * gv;
                            }
                        } else {
                            for (j, &gv) in g_row.iter().enumerate() {
                                gi_row[j * s + k] = gi_row[j * s + k] + wk * gv;
                            }
                        }
                    }
                }
            }
        }
        gi.map(|d| Tensor::new(vec![c_in, in_len], d)).transpose()
    }
}

/// Dot product with four independent accumulators so the compiler can
/// vectorise the reduction.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 4];
    let (xa, xb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = xa
        .remainder()
        .iter()
        .zip(xb.remainder())
        .fold(T::zero(), |t, (&p, &q)| t + p * q);
    for (x, y) in xa.zip(xb) {
        for ((s, &p), &q) in acc.iter_mut().zip(x).zip(y) {
            *s = *s + p * q;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn single(kernel: &[f64]) -> Conv1d<f64> {
        Conv1d::new(
            Tensor::new(vec![1, 1, kernel.len()], kernel.to_vec()).unwrap(),
            Tensor::zeros(&[1]),
            1,
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel() {
        let out = single(&[1.0])
            .forward(&t2(&[&[1.0, 2.0, 3.0, 4.0]]))
            .unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn center_pick_kernel_valid_padding() {
        let out = single(&[0.0, 1.0, 0.0])
            .forward(&t2(&[&[1.0, 2.0, 3.0, 4.0]]))
            .unwrap();
        assert_eq!(out.shape(), &[1, 2]);
        assert_eq!(out.data(), &[2.0, 3.0]);
    }

    #[test]
    fn strided_output_len() {
        assert_eq!(window_output_len(10, 3, 2), Some(4));
        assert_eq!(window_output_len(2, 3, 1), None);
        let conv = Conv1d::new(Tensor::<f64>::zeros(&[1, 1, 3]), Tensor::zeros(&[1]), 2).unwrap();
        let out = conv.forward(&Tensor::zeros(&[1, 10])).unwrap();
        assert_eq!(out.shape(), &[1, 4]);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let conv = single(&[1.0]);
        let err = conv.forward(&Tensor::zeros(&[2, 4])).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
        let err = single(&[1.0, 1.0, 1.0])
            .forward(&Tensor::zeros(&[1, 2]))
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn bias_length_checked() {
        assert!(Conv1d::new(Tensor::<f32>::zeros(&[2, 1, 3]), Tensor::zeros(&[3]), 1).is_err());
        assert!(Conv1d::new(Tensor::<f32>::zeros(&[2, 1, 3]), Tensor::zeros(&[2]), 0).is_err());
    }

    #[test]
    fn zero_upstream_gradient() {
        let conv = Conv1d::new(
            Tensor::new(vec![2, 1, 2], vec![0.5, -1.0, 2.0, 0.25]).unwrap(),
            Tensor::from_vec(vec![0.1, 0.2]).unwrap(),
            1,
        )
        .unwrap();
        let input = t2(&[&[1.0, -2.0, 3.0, 0.5]]);
        let g = conv.backward(&input, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.kernels.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_tap_kernel_gradient_is_input_dot_grad() {
        let conv = single(&[1.0]);
        let input = t2(&[&[1.0, 2.0, 3.0, 4.0]]);
        let grad_out = t2(&[&[0.5, -1.0, 2.0, 1.0]]);
        let g = conv.backward(&input, &grad_out).unwrap();
        assert_eq!(g.kernels.data()[0], 0.5 - 2.0 + 6.0 + 4.0);
        assert_eq!(g.bias.data()[0], 2.5);
        assert_eq!(g.input.data(), grad_out.data());
    }

    #[test]
    fn grad_out_shape_checked() {
        let conv = single(&[1.0, 1.0]);
        let err = conv
            .backward(&t2(&[&[1.0, 2.0, 3.0]]), &Tensor::zeros(&[1, 3]))
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
