use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| x.max(T::zero()))
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if !input.same_shape(grad_out) {
        return Err(Error::shape(format!(
            "relu grad shape {:?} != input shape {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

pub(crate) fn relu_in_place<T: Real>(xs: &mut [T]) {
    for x in xs {
        if x.is_nan() || *x <= T::zero() {
            *x = T::zero();
        }
    }
}

pub(crate) fn relu_backward_in_place<T: Real>(pre_activation: &[T], grad: &mut [T]) {
    for (g, &x) in grad.iter_mut().zip(pre_activation) {
        if x.is_nan() || x <= T::zero() {
            *g = T::zero();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec(vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&x, &Tensor::from_vec(vec![5.0, 5.0, 5.0]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn all_negative_kills_output_and_gradient() {
        let x = Tensor::from_vec(vec![-3.0f32, -0.1, -7.0]).unwrap();
        assert!(relu(&x).data().iter().all(|&v| v == 0.0));
        let g = relu_backward(&x, &Tensor::from_vec(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }
}
