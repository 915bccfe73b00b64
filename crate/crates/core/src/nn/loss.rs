use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Numerically stable softmax, computed in 64-bit regardless of `T`.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::shape("softmax of empty logits"));
    }
    if let Some(bad) = logits.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("logit {bad} is {:?}", logits[bad])));
    }
    let max = logits
        .iter()
        .map(|x| x.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x.as_f64() - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Returns `(-log softmax[true_class], softmax - onehot)`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor<T>,
    true_class: usize,
) -> Result<(f64, Tensor<T>)> {
    let z = logits.data();
    if true_class >= z.len() {
        return Err(Error::shape(format!(
            "class {true_class} out of range for {} logits",
            z.len()
        )));
    }
    let probs = softmax(z)?;
    let max = z
        .iter()
        .map(|x| x.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = z.iter().map(|x| (x.as_f64() - max).exp()).sum::<f64>().ln();
    let loss = -(z[true_class].as_f64() - max - log_sum);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| T::from_f64(if k == true_class { p - 1.0 } else { p }))
        .collect();
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?))
}
