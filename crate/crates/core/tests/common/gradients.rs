//! Analytic gradients of every layer against central finite differences in
//! 64-bit mode. Each check returns the worst relative error it saw.

use cnn_ids::nn::{
    maxpool1d_backward, relu, relu_backward, softmax_cross_entropy, Architecture, Conv1d, Dense,
    MaxPool1d, Mode, ModelParams,
};
use cnn_ids::Tensor;

use super::*;

pub const TOL: f64 = 1e-4;
pub const SOFTMAX_TOL: f64 = 1e-5;
const H: f64 = 1e-5;

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conv_case(seed: u64, c_in: usize, len: usize, c_out: usize, k: usize, stride: usize) -> f64 {
    let mut r = rng(seed);
    let x = uniform(&mut r, c_in * len);
    let w = uniform(&mut r, c_out * c_in * k);
    let b = uniform(&mut r, c_out);
    let out_len = (len - k) / stride + 1;
    let up = uniform(&mut r, c_out * out_len);
    let build = |w: &[f64], b: &[f64]| {
        Conv1d::new(
            Tensor::new(vec![c_out, c_in, k], w.to_vec()).unwrap(),
            Tensor::from_vec(b.to_vec()).unwrap(),
            stride,
        )
        .unwrap()
    };
    let input = |x: &[f64]| Tensor::new(vec![c_in, len], x.to_vec()).unwrap();
    let conv = build(&w, &b);
    let grads = conv
        .backward(
            &input(&x),
            &Tensor::new(vec![c_out, out_len], up.clone()).unwrap(),
        )
        .unwrap();

    let n_x = numeric_grad(
        &mut |x| dotv(conv.forward(&input(x)).unwrap().data(), &up),
        &x,
        H,
    );
    let n_w = numeric_grad(
        &mut |w| dotv(build(w, &b).forward(&input(&x)).unwrap().data(), &up),
        &w,
        H,
    );
    let n_b = numeric_grad(
        &mut |b| dotv(build(&w, b).forward(&input(&x)).unwrap().data(), &up),
        &b,
        H,
    );
    max_rel_error(grads.input.data(), &n_x)
        .max(max_rel_error(grads.kernels.data(), &n_w))
        .max(max_rel_error(grads.bias.data(), &n_b))
}

pub fn conv_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        worst = worst.max(conv_case(seed, 2, 10, 3, 3, 1));
    }
    for seed in 20..25 {
        worst = worst.max(conv_case(seed, 3, 13, 2, 4, 2));
    }
    worst
}

pub fn pool_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(100 + seed);
        let x = uniform(&mut r, 3 * 11);
        let pool = MaxPool1d::new(2, 2).unwrap();
        let t = |x: &[f64]| Tensor::new(vec![3, 11], x.to_vec()).unwrap();
        let (out, idx) = pool.forward(&t(&x)).unwrap();
        let up = uniform(&mut r, out.len());
        let g = maxpool1d_backward(
            &idx,
            &Tensor::new(out.shape().to_vec(), up.clone()).unwrap(),
        )
        .unwrap();
        let num = numeric_grad(
            &mut |x| dotv(pool.forward(&t(x)).unwrap().0.data(), &up),
            &x,
            H,
        );
        worst = worst.max(max_rel_error(g.data(), &num));
    }
    worst
}

pub fn dense_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let (n_in, n_out) = (16, 8);
        let x = uniform(&mut r, n_in);
        let w = uniform(&mut r, n_out * n_in);
        let b = uniform(&mut r, n_out);
        let up = uniform(&mut r, n_out);
        let build = |w: &[f64], b: &[f64]| {
            Dense::new(
                Tensor::new(vec![n_out, n_in], w.to_vec()).unwrap(),
                Tensor::from_vec(b.to_vec()).unwrap(),
            )
            .unwrap()
        };
        let layer = build(&w, &b);
        let xt = |x: &[f64]| Tensor::from_vec(x.to_vec()).unwrap();
        let g = layer.backward(&xt(&x), &xt(&up)).unwrap();
        let n_x = numeric_grad(
            &mut |x| dotv(layer.forward(&xt(x)).unwrap().data(), &up),
            &x,
            H,
        );
        let n_w = numeric_grad(
            &mut |w| dotv(build(w, &b).forward(&xt(&x)).unwrap().data(), &up),
            &w,
            H,
        );
        let n_b = numeric_grad(
            &mut |b| dotv(build(&w, b).forward(&xt(&x)).unwrap().data(), &up),
            &b,
            H,
        );
        worst = worst
            .max(max_rel_error(g.input.data(), &n_x))
            .max(max_rel_error(g.weights.data(), &n_w))
            .max(max_rel_error(g.bias.data(), &n_b));
    }
    worst
}

pub fn relu_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let x: Vec<f64> = (0..32)
            .map(|_| loop {
                let v = uniform(&mut r, 1)[0];
                if v.abs() >= 1e-3 {
                    break v;
                }
            })
            .collect();
        let up = uniform(&mut r, 32);
        let xt = |x: &[f64]| Tensor::from_vec(x.to_vec()).unwrap();
        let g = relu_backward(&xt(&x), &xt(&up)).unwrap();
        let num = numeric_grad(&mut |x| dotv(relu(&xt(x)).data(), &up), &x, H);
        worst = worst.max(max_rel_error(g.data(), &num));
    }
    worst
}

pub fn softmax_worst() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut r = rng(400 + seed);
        let z: Vec<f64> = uniform(&mut r, 9).into_iter().map(|v| 3.0 * v).collect();
        let y = (seed as usize) % 9;
        let zt = |z: &[f64]| Tensor::from_vec(z.to_vec()).unwrap();
        let (_, g) = softmax_cross_entropy(&zt(&z), y).unwrap();
        let num = numeric_grad(&mut |z| softmax_cross_entropy(&zt(z), y).unwrap().0, &z, H);
        worst = worst.max(max_rel_error(g.data(), &num));
    }
    worst
}

fn tiny_arch(dropout_rate: f64) -> Architecture {
    Architecture {
        input_len: 16,
        conv_filters: vec![2, 2, 2],
        kernel_len: 2,
        conv_stride: 1,
        pool_len: 2,
        pool_stride: 2,
        dense_units: 4,
        num_classes: 3,
        dropout_rate,
    }
}

/// Worst relative error over all parameters of one random tiny model, or
/// `None` when the instance sits on a non-smooth point.
fn model_case(seed: u64, arch: &Architecture, mode: Mode) -> Option<f64> {
    let mut r = rng(500 + seed);
    let params = ModelParams::<f64>::init(arch.clone(), seed).unwrap();
    let x = uniform(&mut r, arch.input_len);
    let y = seed as usize % arch.num_classes;
    let dropout_seed = 9000 + seed;
    let loss_of = |p: &ModelParams<f64>| {
        let mut drng = rng(dropout_seed);
        let cache = p.forward_cached(&x, mode, &mut drng).unwrap();
        softmax_cross_entropy(&cache.logits, y).unwrap()
    };
    let mut drng = rng(dropout_seed);
    let cache = params.forward_cached(&x, mode, &mut drng).unwrap();
    let (_, g_logits) = softmax_cross_entropy(&cache.logits, y).unwrap();
    let grads = params.backward(&cache, &g_logits).unwrap();

    let flat: Vec<f64> = params
        .tensors()
        .iter()
        .flat_map(|t| t.data().to_vec())
        .collect();
    let shapes: Vec<Vec<usize>> = params
        .tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let rebuild = |v: &[f64]| {
        let mut off = 0;
        let ts = shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::new(s.clone(), v[off..off + n].to_vec()).unwrap();
                off += n;
                t
            })
            .collect();
        ModelParams::from_tensors(arch.clone(), ts).unwrap()
    };
    let numeric = smooth_numeric_grad(&mut |v| loss_of(&rebuild(v)).0, &flat, H)?;
    let analytic: Vec<f64> = grads
        .tensors
        .iter()
        .flat_map(|t| t.data().to_vec())
        .collect();
    Some(max_rel_error(&analytic, &numeric))
}

/// Worst error over 20 smooth instances of the tiny stack.
pub fn model_worst(dropout_rate: f64) -> f64 {
    let arch = tiny_arch(dropout_rate);
    let mode = if dropout_rate > 0.0 {
        Mode::Train
    } else {
        Mode::Infer
    };
    let (mut checked, mut worst, mut seed) = (0, 0f64, 0u64);
    while checked < 20 {
        assert!(seed < 200, "too many non-smooth instances");
        if let Some(e) = model_case(seed, &arch, mode) {
            worst = worst.max(e);
            checked += 1;
        }
        seed += 1;
    }
    worst
}
