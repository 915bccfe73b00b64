//! Reference implementations that share no code with the kernel.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod gradients;
pub mod kernels;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// out[o][j] = b[o] + Σ_c Σ_k w[o][c][k] · x[c][j·s + k]
pub fn brute_conv(x: &[Vec<f64>], w: &[Vec<Vec<f64>>], b: &[f64], stride: usize) -> Vec<Vec<f64>> {
    let len = x[0].len();
    let k_len = w[0][0].len();
    let out_len = (len - k_len) / stride + 1;
    let mut out = vec![vec![0.0; out_len]; w.len()];
    for o in 0..w.len() {
        for j in 0..out_len {
            let mut acc = b[o];
            for c in 0..x.len() {
                for k in 0..k_len {
                    acc += w[o][c][k] * x[c][j * stride + k];
                }
            }
            out[o][j] = acc;
        }
    }
    out
}

/// Max over each full window; the partial tail window is ignored.
pub fn brute_pool(x: &[Vec<f64>], pool: usize, stride: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let mut out = Vec::new();
            let mut start = 0;
            while start + pool <= row.len() {
                out.push(
                    row[start..start + pool]
                        .iter()
                        .cloned()
                        .fold(f64::NEG_INFINITY, f64::max),
                );
                start += stride;
            }
            out
        })
        .collect()
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max of |a - n| / max(|a|, |n|), skipping pairs where both are below 1e-8.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() >= 1e-8 || n.abs() >= 1e-8)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()))
        .fold(0.0, f64::max)
}

/// Numeric gradient at step `h`, or `None` when steps `h` and `h / 2`
/// disagree (the probe straddles a ReLU kink or a pooling switch).
pub fn smooth_numeric_grad(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
) -> Option<Vec<f64>> {
    let g1 = numeric_grad(f, x, h);
    let g2 = numeric_grad(f, x, h / 2.0);
    (max_rel_error(&g1, &g2) < 1e-6).then_some(g2)
}
