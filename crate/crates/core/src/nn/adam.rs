use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

use super::model::ModelParams;

/// Anything exposing an ordered list of trainable tensors.
pub trait ParamSet<T> {
    fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

impl<T: Real> ParamSet<T> for ModelParams<T> {
    fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.tensors_mut()
    }
}

impl<T: Real> ParamSet<T> for Vec<Tensor<T>> {
    fn param_tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.iter_mut().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<T: Real> AdamState<T> {
    /// Fresh state with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a [usize]>, learning_rate: f64) -> Self {
        let m: Vec<Tensor<T>> = shapes.into_iter().map(Tensor::zeros).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn for_model(params: &ModelParams<T>, learning_rate: f64) -> Self {
        Self::new(
            params.tensors().into_iter().map(|t| t.shape()),
            learning_rate,
        )
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step<P: ParamSet<T>>(&mut self, params: &mut P, grads: &[Tensor<T>]) -> Result<()> {
        let mut tensors = params.param_tensors_mut();
        if tensors.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                tensors.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in tensors.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::shape(format!(
                    "adam tensor {i}: state {:?}, param {:?}, grad {:?}",
                    self.m[i].shape(),
                    p.shape(),
                    g.shape()
                )));
            }
        }

        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let correction1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let correction2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.learning_rate);
        let eps = T::from_f64(self.epsilon);

        for ((p, g), (m, v)) in tensors
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let m_hat = *mi / correction1;
                let v_hat = *vi / correction2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
