use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;
use crate::tensor::Tensor;
use crate::trainer::TrainConfig;

use super::activation::{relu_backward_in_place, relu_in_place};
use super::conv::Conv1d;
use super::dense::Dense;
use super::dropout::{check_rate, dropout_mask, Mode};
use super::pool::{maxpool1d_backward, MaxPool1d, PoolIndices};

/// Hyperparameters that fix every tensor shape in the layer stack:
/// (Conv → ReLU → MaxPool) per entry of `conv_filters`, Flatten,
/// Dense → ReLU → Dropout, Dense → logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_len: usize,
    pub conv_filters: Vec<usize>,
    pub kernel_len: usize,
    pub conv_stride: usize,
    pub pool_len: usize,
    pub pool_stride: usize,
    pub dense_units: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Architecture {
    pub fn from_config(config: &TrainConfig, input_len: usize, num_classes: usize) -> Self {
        Self {
            input_len,
            conv_filters: config.conv_filters.clone(),
            kernel_len: config.kernel_len,
            conv_stride: 1,
            pool_len: config.pool_len,
            pool_stride: config.pool_len,
            dense_units: config.dense_units,
            num_classes,
            dropout_rate: config.dropout_rate,
        }
    }

    /// Signal length entering each conv stage, followed by the final pooled
    /// length. Errors name the first stage the input cannot reach.
    pub fn stage_lengths(&self) -> Result<Vec<usize>> {
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::Architecture(format!(
                "conv_filters must be non-empty and positive, got {:?}",
                self.conv_filters
            )));
        }
        for (name, v) in [
            ("kernel_len", self.kernel_len),
            ("conv_stride", self.conv_stride),
            ("pool_len", self.pool_len),
            ("pool_stride", self.pool_stride),
            ("dense_units", self.dense_units),
        ] {
            if v == 0 {
                return Err(Error::Architecture(format!("{name} must be >= 1")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Architecture(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        check_rate(self.dropout_rate).map_err(|e| Error::Architecture(e.to_string()))?;

        let mut lens = vec![self.input_len];
        let mut len = self.input_len;
        for i in 0..self.conv_filters.len() {
            let conv_out = super::conv::window_output_len(len, self.kernel_len, self.conv_stride)
                .ok_or_else(|| {
                Error::Architecture(format!(
                    "conv{} receives length {len} < kernel_len {} (input_len {})",
                    i + 1,
                    self.kernel_len,
                    self.input_len
                ))
            })?;
            len = super::conv::window_output_len(conv_out, self.pool_len, self.pool_stride)
                .ok_or_else(|| {
                    Error::Architecture(format!(
                        "pool{} receives length {conv_out} < pool_len {} (input_len {})",
                        i + 1,
                        self.pool_len,
                        self.input_len
                    ))
                })?;
            lens.push(len);
        }
        Ok(lens)
    }

    pub fn flatten_len(&self) -> Result<usize> {
        let lens = self.stage_lengths()?;
        Ok(lens[lens.len() - 1] * self.conv_filters[self.conv_filters.len() - 1])
    }

    /// Expected shape of every parameter tensor in declaration order.
    pub fn param_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let flat = self.flatten_len()?;
        let mut shapes = Vec::new();
        let mut in_ch = 1;
        for &f in &self.conv_filters {
            shapes.push(vec![f, in_ch, self.kernel_len]);
            shapes.push(vec![f]);
            in_ch = f;
        }
        shapes.push(vec![self.dense_units, flat]);
        shapes.push(vec![self.dense_units]);
        shapes.push(vec![self.num_classes, self.dense_units]);
        shapes.push(vec![self.num_classes]);
        Ok(shapes)
    }
}

/// All trainable tensors of the network plus its architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    arch: Architecture,
    convs: Vec<Conv1d<T>>,
    pool: MaxPool1d,
    hidden: Dense<T>,
    output: Dense<T>,
}

/// Gradient tensors in the same order as [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(params: &ModelParams<T>) -> Self {
        Self {
            tensors: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|x| *x = *x * factor);
        }
    }

    pub fn clear(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(T::zero()));
    }
}

/// Intermediate values of one forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    conv_inputs: Vec<Tensor<T>>,
    conv_outputs: Vec<Tensor<T>>,
    pool_indices: Vec<PoolIndices>,
    flat: Vec<T>,
    hidden: Vec<T>,
    dropout: Option<Vec<T>>,
    hidden_out: Vec<T>,
    pub logits: Tensor<T>,
}

/// He-initialised parameters for `config` on inputs of `input_len` features.
pub fn init_params(
    config: &TrainConfig,
    input_len: usize,
    num_classes: usize,
    seed: u64,
) -> Result<ModelParams<f32>> {
    ModelParams::init(
        Architecture::from_config(config, input_len, num_classes),
        seed,
    )
}

impl<T: Real> ModelParams<T> {
    /// Weights ~ N(0, 2 / fan_in); biases zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        let mut rng = rng::seeded(seed, rng::INIT, 0);
        let tensors = shapes
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                let len = shape.iter().product();
                let data = (0..len)
                    .map(|_| T::from_f64(normal.sample(&mut rng)))
                    .collect();
                Tensor::new(shape, data).expect("shape from architecture")
            })
            .collect();
        Self::from_tensors(arch, tensors)
    }

    /// Assembles a model from tensors in declaration order, validating shapes.
    pub fn from_tensors(arch: Architecture, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = arch.param_shapes()?;
        if tensors.len() != shapes.len() {
            return Err(Error::shape(format!(
                "architecture needs {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for (i, (t, s)) in tensors.iter().zip(&shapes).enumerate() {
            if t.shape() != s.as_slice() {
                return Err(Error::shape(format!(
                    "tensor {i} has shape {:?}, architecture expects {s:?}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut convs = Vec::with_capacity(arch.conv_filters.len());
        for _ in 0..arch.conv_filters.len() {
            let k = it.next().expect("counted");
            let b = it.next().expect("counted");
            convs.push(Conv1d::new(k, b, arch.conv_stride)?);
        }
        let hidden = Dense::new(it.next().expect("counted"), it.next().expect("counted"))?;
        let output = Dense::new(it.next().expect("counted"), it.next().expect("counted"))?;
        let pool = MaxPool1d::new(arch.pool_len, arch.pool_stride)?;
        Ok(Self {
            arch,
            convs,
            pool,
            hidden,
            output,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::with_capacity(self.convs.len() * 2 + 4);
        for c in &self.convs {
            out.push(c.kernels());
            out.push(c.bias());
        }
        out.extend([
            self.hidden.weights(),
            self.hidden.bias(),
            self.output.weights(),
            self.output.bias(),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::with_capacity(self.convs.len() * 2 + 4);
        for c in &mut self.convs {
            let (k, b) = c.params_mut();
            out.push(k);
            out.push(b);
        }
        let (hw, hb) = self.hidden.params_mut();
        let (ow, ob) = self.output.params_mut();
        out.extend([hw, hb, ow, ob]);
        out
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.tensors().into_iter().cloned().collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let tensors = self.tensors().iter().map(|t| t.cast()).collect();
        ModelParams::from_tensors(self.arch.clone(), tensors).expect("same architecture")
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.arch.input_len {
            return Err(Error::shape(format!(
                "model expects {} features, got {}",
                self.arch.input_len,
                input.len()
            )));
        }
        Ok(())
    }

    /// Inference-mode logits; a pure function of `(self, input)`.
    pub fn infer(&self, input: &[T]) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let mut x = Tensor::new(vec![1, input.len()], input.to_vec())?;
        for conv in &self.convs {
            let mut y = conv.forward(&x)?;
            relu_in_place(y.data_mut());
            x = self.pool.forward(&y)?.0;
        }
        let mut h = self.hidden.forward_slice(x.data())?;
        relu_in_place(&mut h);
        Tensor::from_vec(self.output.forward_slice(&h)?)
    }

    pub fn forward(&self, input: &[T], mode: Mode, rng: &mut impl Rng) -> Result<Tensor<T>> {
        match mode {
            Mode::Infer => self.infer(input),
            Mode::Train => Ok(self.forward_cached(input, mode, rng)?.logits),
        }
    }

    pub fn forward_cached(
        &self,
        input: &[T],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<ForwardCache<T>> {
        self.check_input(input)?;
        let n = self.convs.len();
        let mut conv_inputs = Vec::with_capacity(n);
        let mut conv_outputs = Vec::with_capacity(n);
        let mut pool_indices = Vec::with_capacity(n);
        let mut x = Tensor::new(vec![1, input.len()], input.to_vec())?;
        for conv in &self.convs {
            let mut y = conv.forward(&x)?;
            relu_in_place(y.data_mut());
            let (pooled, idx) = self.pool.forward(&y)?;
            conv_inputs.push(x);
            conv_outputs.push(y);
            pool_indices.push(idx);
            x = pooled;
        }
        let flat = x.into_data();
        let mut hidden = self.hidden.forward_slice(&flat)?;
        relu_in_place(&mut hidden);
        let dropout = (mode == Mode::Train && self.arch.dropout_rate > 0.0)
            .then(|| dropout_mask::<T>(hidden.len(), self.arch.dropout_rate, rng));
        let hidden_out = match &dropout {
            Some(mask) => hidden.iter().zip(mask).map(|(&h, &m)| h * m).collect(),
            None => hidden.clone(),
        };
        let logits = Tensor::from_vec(self.output.forward_slice(&hidden_out)?)?;
        Ok(ForwardCache {
            conv_inputs,
            conv_outputs,
            pool_indices,
            flat,
            hidden,
            dropout,
            hidden_out,
            logits,
        })
    }

    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
    ) -> Result<Gradients<T>> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_accumulate(cache, grad_logits, &mut grads)?;
        Ok(grads)
    }

    /// Adds this sample's parameter gradients into `grads`.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache<T>,
        grad_logits: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<()> {
        let n = self.convs.len();
        let g = &mut grads.tensors;
        if g.len() != 2 * n + 4 {
            return Err(Error::shape("gradient buffer does not match model"));
        }
        let (conv_grads, dense_grads) = g.split_at_mut(2 * n);
        let [hw, hb, ow, ob] = dense_grads else {
            unreachable!("length checked")
        };

        let mut gh = self.output.backward_into(
            &cache.hidden_out,
            grad_logits.data(),
            ow.data_mut(),
            ob.data_mut(),
        )?;
        if let Some(mask) = &cache.dropout {
            gh.iter_mut().zip(mask).for_each(|(g, &m)| *g = *g * m);
        }
        relu_backward_in_place(&cache.hidden, &mut gh);
        let g_flat = self
            .hidden
            .backward_into(&cache.flat, &gh, hw.data_mut(), hb.data_mut())?;

        let last = n - 1;
        let last_shape = vec![
            self.arch.conv_filters[last],
            cache.flat.len() / self.arch.conv_filters[last],
        ];
        let mut grad = Tensor::new(last_shape, g_flat)?;
        for i in (0..n).rev() {
            let mut g_conv = maxpool1d_backward(&cache.pool_indices[i], &grad)?;
            relu_backward_in_place(cache.conv_outputs[i].data(), g_conv.data_mut());
            let (gk, rest) = conv_grads[2 * i..].split_at_mut(1);
            let gi = self.convs[i].backward_into(
                &cache.conv_inputs[i],
                &g_conv,
                gk[0].data_mut(),
                rest[0].data_mut(),
                i > 0,
            )?;
            if let Some(gi) = gi {
                grad = gi;
            }
        }
        Ok(())
    }
}
