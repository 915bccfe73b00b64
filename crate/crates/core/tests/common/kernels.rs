//! Kernel outputs against the brute-force references.

use cnn_ids::nn::{Conv1d, MaxPool1d};
use cnn_ids::Tensor;
use rand::Rng;

use super::*;

pub fn to_rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.dim(0)).map(|i| t.row(i).to_vec()).collect()
}

/// Largest elementwise gap between kernel and reference over `cases`
/// randomly shaped conv and pool problems.
pub fn random_shape_max_delta(cases: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let c_in = r.random_range(1..5);
        let c_out = r.random_range(1..6);
        let k = r.random_range(1..6);
        let stride = r.random_range(1..4);
        let len = r.random_range(k..k + 40);
        let x = uniform(&mut r, c_in * len);
        let w = uniform(&mut r, c_out * c_in * k);
        let b = uniform(&mut r, c_out);
        let conv = Conv1d::new(
            Tensor::new(vec![c_out, c_in, k], w.clone()).unwrap(),
            Tensor::from_vec(b.clone()).unwrap(),
            stride,
        )
        .unwrap();
        let input = Tensor::new(vec![c_in, len], x).unwrap();
        let got = conv.forward(&input).unwrap();
        let wk: Vec<Vec<Vec<f64>>> = w
            .chunks(c_in * k)
            .map(|o| o.chunks(k).map(<[f64]>::to_vec).collect())
            .collect();
        let want = brute_conv(&to_rows(&input), &wk, &b, stride).concat();
        if got.len() != want.len() {
            return f64::INFINITY;
        }
        for (g, e) in got.data().iter().zip(&want) {
            worst = worst.max((g - e).abs());
        }

        let pool_len = r.random_range(1..5);
        let pool_stride = r.random_range(1..4);
        let plen = r.random_range(pool_len..pool_len + 40);
        let channels = r.random_range(1..9);
        let px = Tensor::new(vec![channels, plen], uniform(&mut r, channels * plen)).unwrap();
        let (got, idx) = MaxPool1d::new(pool_len, pool_stride)
            .unwrap()
            .forward(&px)
            .unwrap();
        let want = brute_pool(&to_rows(&px), pool_len, pool_stride).concat();
        if got.len() != want.len() {
            return f64::INFINITY;
        }
        for ((g, e), &i) in got.data().iter().zip(&want).zip(idx.argmax()) {
            worst = worst.max((g - e).abs()).max((px.data()[i] - g).abs());
        }
    }
    worst
}
