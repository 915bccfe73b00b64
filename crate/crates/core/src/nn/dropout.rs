use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted dropout with its own deterministic generator.
#[derive(Clone, Debug)]
pub struct DropoutLayer {
    rate: f64,
    rng: ChaCha8Rng,
}

impl DropoutLayer {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward<T: Real>(&mut self, input: &Tensor<T>, mode: Mode) -> Tensor<T> {
        match mode {
            Mode::Infer => input.clone(),
            Mode::Train => {
                let mask = dropout_mask::<T>(input.len(), self.rate, &mut self.rng);
                let data = input
                    .data()
                    .iter()
                    .zip(&mask)
                    .map(|(&x, &m)| x * m)
                    .collect();
                Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
            }
        }
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Per-element multipliers: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask<T: Real>(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<T> {
    if rate == 0.0 {
        return vec![T::one(); len];
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}
