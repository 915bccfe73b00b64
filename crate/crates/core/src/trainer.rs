//! Mini-batch training loop with per-epoch loss tracking and timing.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_io::{self, ModelMetadata};
use crate::nn::{softmax_cross_entropy, AdamState, Architecture, Gradients, Mode, ModelParams};
use crate::pipeline::{stratified_indices, LabeledDataset};
use crate::rng;
use crate::tensor::Tensor;

/// Rows per gradient work unit. Batches are reduced chunk by chunk in a
/// fixed order, so results do not depend on thread count.
const CHUNK_ROWS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub conv_filters: Vec<usize>,
    pub kernel_len: usize,
    pub pool_len: usize,
    pub dense_units: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Holdout share used by the `train` command before fitting.
    pub test_fraction: f64,
    /// Compute per-chunk gradients on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 256,
            learning_rate: 1e-3,
            dropout_rate: 0.5,
            conv_filters: vec![64, 128, 256],
            kernel_len: 3,
            pool_len: 2,
            dense_units: 128,
            seed: 42,
            validation_fraction: 0.1,
            test_fraction: 0.2,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Applies `key=value` overrides, values in the same syntax as the file.
    pub fn with_overrides<'a>(&self, overrides: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(&self.to_toml_string()).expect("round trip");
        for ov in overrides {
            let (k, v) = ov
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            if !table.contains_key(k) {
                return Err(Error::Config(format!("unknown config key {k:?}")));
            }
            let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {v}"))
                .map(|mut t| t.remove("v").expect("present"))
                .unwrap_or_else(|_| toml::Value::String(v.to_string()));
            table.insert(k.to_string(), parsed);
        }
        Self::from_toml_str(&toml::to_string(&table).expect("table serialises"))
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub total_seconds: f64,
    pub adam_steps: u64,
    /// Per-row backward passes; equals `epochs × train_rows`.
    pub gradient_evaluations: u64,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub batch_size: usize,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss,seconds`; `val_loss` is empty when no
    /// validation rows were carved out.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,seconds")?;
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(w, "{},{:.6},{val},{:.3}", e.epoch, e.train_loss, e.seconds)?;
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "trained {} epochs on {} rows ({} validation) in {:.2} s",
            self.epochs.len(),
            self.train_rows,
            self.validation_rows,
            self.total_seconds
        )
    }
}

fn chunk_ranges(len: usize) -> Vec<(usize, usize)> {
    (0..len)
        .step_by(CHUNK_ROWS)
        .map(|s| (s, (s + CHUNK_ROWS).min(len)))
        .collect()
}

/// Trains a fresh He-initialised model on `dataset`.
pub fn train(dataset: &LabeledDataset, config: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let arch = Architecture::from_config(config, dataset.n_features(), dataset.num_classes());
    let mut params = ModelParams::<f32>::init(arch, config.seed)?;
    let report = train_params(&mut params, dataset, config)?;
    Ok((params, report))
}

/// Continues training `params` in place.
pub fn train_params(
    params: &mut ModelParams,
    dataset: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    if dataset.n_features() != params.input_len() {
        return Err(Error::Config(format!(
            "model expects {} features, dataset has {}",
            params.input_len(),
            dataset.n_features()
        )));
    }
    if dataset.num_classes() != params.num_classes() {
        return Err(Error::Config(format!(
            "model has {} classes, dataset has {}",
            params.num_classes(),
            dataset.num_classes()
        )));
    }
    let started = Instant::now();

    let (train_idx, val_idx) = if config.validation_fraction > 0.0 {
        let s = stratified_indices(
            &dataset.labels,
            dataset.num_classes(),
            1.0 - config.validation_fraction,
            rng::derive_seed(config.seed, rng::VALIDATION, 0),
        )?;
        (s.train, s.test)
    } else {
        ((0..dataset.len()).collect(), Vec::new())
    };
    let train_set = dataset.subset(&train_idx);
    let val_set = (!val_idx.is_empty()).then(|| dataset.subset(&val_idx));
    let n = train_set.len();
    let batch_size = config.batch_size.min(n);
    if batch_size < config.batch_size {
        log::info!(
            "batch_size {} exceeds {n} training rows; using {batch_size}",
            config.batch_size
        );
    }

    let mut adam = AdamState::for_model(params, config.learning_rate);
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut gradient_evaluations = 0u64;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        let epoch_start = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut rng::seeded(config.seed, rng::SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(batch_size).enumerate() {
            let stream_base = ((epoch as u64) << 40) + (b * batch_size) as u64;
            let (mut grads, batch_loss) =
                batch_gradients(params, &train_set, batch, stream_base, config)?;
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                });
            }
            loss_sum += batch_loss;
            gradient_evaluations += batch.len() as u64;
            grads.scale(1.0 / batch.len() as f32);
            adam.step(params, &grads.tensors)?;
        }
        let train_loss = loss_sum / n as f64;
        let val_loss = val_set
            .as_ref()
            .map(|v| evaluate_loss_with(params, v, config.parallel))
            .transpose()?;
        if let Some(v) = val_loss.filter(|v| !v.is_finite()) {
            log::error!("validation loss {v} at epoch {epoch}");
            return Err(Error::Divergence { epoch, batch: 0 });
        }
        let seconds = epoch_start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.5} val_loss {} ({seconds:.2} s)",
            val_loss.map_or("-".to_string(), |v| format!("{v:.5}"))
        );
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds,
        });
    }

    Ok(TrainReport {
        epochs,
        total_seconds: started.elapsed().as_secs_f64(),
        adam_steps: adam.step_count(),
        gradient_evaluations,
        train_rows: n,
        validation_rows: val_idx.len(),
        batch_size,
    })
}

/// Summed gradients and summed loss over `batch` (indices into `data`).
fn batch_gradients(
    params: &ModelParams,
    data: &LabeledDataset,
    batch: &[usize],
    stream_base: u64,
    config: &TrainConfig,
) -> Result<(Gradients, f64)> {
    let work = |&(start, end): &(usize, usize)| -> Result<(Gradients, f64)> {
        let mut grads = Gradients::zeros_like(params);
        let mut loss_sum = 0.0;
        for (pos, &row) in batch.iter().enumerate().take(end).skip(start) {
            let mut rng = rng::seeded(config.seed, rng::DROPOUT, stream_base + pos as u64);
            let cache = params.forward_cached(data.features.row(row), Mode::Train, &mut rng)?;
            let (loss, grad_logits) = match softmax_cross_entropy(&cache.logits, data.labels[row]) {
                Ok(v) => v,
                Err(Error::Numeric(_)) => return Ok((grads, f64::NAN)),
                Err(e) => return Err(e),
            };
            loss_sum += loss;
            params.backward_accumulate(&cache, &grad_logits, &mut grads)?;
        }
        Ok((grads, loss_sum))
    };
    let ranges = chunk_ranges(batch.len());
    let parts: Vec<Result<(Gradients, f64)>> = if config.parallel {
        ranges.par_iter().map(work).collect()
    } else {
        ranges.iter().map(work).collect()
    };
    let mut parts = parts.into_iter();
    let (mut total, mut loss) = parts.next().expect("non-empty batch")?;
    for part in parts {
        let (g, l) = part?;
        total.add_assign(&g);
        loss += l;
    }
    Ok((total, loss))
}

/// Mean cross-entropy with dropout disabled.
pub fn evaluate_loss(params: &ModelParams, dataset: &LabeledDataset) -> Result<f64> {
    evaluate_loss_with(params, dataset, true)
}

pub fn evaluate_loss_with(
    params: &ModelParams,
    dataset: &LabeledDataset,
    parallel: bool,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("loss of an empty dataset is undefined".into()));
    }
    let work = |&(start, end): &(usize, usize)| -> Result<f64> {
        let mut sum = 0.0;
        for r in start..end {
            let logits = params.infer(dataset.features.row(r))?;
            sum += softmax_cross_entropy(&logits, dataset.labels[r])?.0;
        }
        Ok(sum)
    };
    let ranges = chunk_ranges(dataset.len());
    let parts: Vec<Result<f64>> = if parallel {
        ranges.par_iter().map(work).collect()
    } else {
        ranges.iter().map(work).collect()
    };
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / dataset.len() as f64)
}

/// Writes parameters plus the per-epoch loss history.
pub fn save_checkpoint(
    params: &ModelParams,
    report: &TrainReport,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut meta = ModelMetadata::for_params(params);
    meta.loss_history = report
        .epochs
        .iter()
        .map(|e| model_io::LossRecord {
            epoch: e.epoch,
            train_loss: e.train_loss,
            val_loss: e.val_loss,
        })
        .collect();
    model_io::write_model(params, &meta, path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, ModelMetadata)> {
    model_io::read_model(path)
}

/// Zeroes the output layer so every input maps to uniform logits.
pub fn zero_output_layer(params: &mut ModelParams) {
    let mut ts = params.tensors_mut();
    let n = ts.len();
    for t in ts.iter_mut().skip(n - 2) {
        let t: &mut Tensor = t;
        t.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win() {
        let cfg = TrainConfig::default()
            .with_overrides(["epochs=5", "conv_filters=[4, 4]", "parallel=false"])
            .unwrap();
        assert_eq!(cfg.epochs, 5);
        assert_eq!(cfg.conv_filters, vec![4, 4]);
        assert!(!cfg.parallel);
        assert!(TrainConfig::default().with_overrides(["nope=1"]).is_err());
        assert!(TrainConfig::default().with_overrides(["epochs=0"]).is_err());
    }

    #[test]
    fn config_file_defaults_and_errors() {
        let cfg = TrainConfig::from_toml_str("epochs = 7\nseed = 3").unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.batch_size, 256);
        assert!(TrainConfig::from_toml_str("validation_fraction = 1.0").is_err());
        assert!(TrainConfig::from_toml_str("epochz = 1").is_err());
        assert_eq!(
            TrainConfig::from_toml_str(&TrainConfig::default().to_toml_string()).unwrap(),
            TrainConfig::default()
        );
    }

    #[test]
    fn chunking_covers_range() {
        assert_eq!(chunk_ranges(0), vec![]);
        assert_eq!(chunk_ranges(33), vec![(0, 16), (16, 32), (32, 33)]);
    }
}
