//! Confusion matrix, macro-averaged precision/recall/F1 and timed inference.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::pipeline::FeatureMatrix;

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_width(params: &ModelParams, features: &FeatureMatrix) -> Result<()> {
    if features.n_cols() != params.input_len() {
        return Err(Error::shape(format!(
            "model expects {} features, data has {}",
            params.input_len(),
            features.n_cols()
        )));
    }
    Ok(())
}

/// Per-row logits in inference mode.
pub fn predict_logits(params: &ModelParams, features: &FeatureMatrix) -> Result<Vec<Vec<f32>>> {
    check_width(params, features)?;
    (0..features.n_rows())
        .into_par_iter()
        .map(|r| params.infer(features.row(r)).map(|t| t.into_data()))
        .collect()
}

pub fn predict(params: &ModelParams, features: &FeatureMatrix) -> Result<Vec<usize>> {
    check_width(params, features)?;
    (0..features.n_rows())
        .into_par_iter()
        .map(|r| params.infer(features.row(r)).map(|t| argmax(t.data())))
        .collect()
}

/// Counts indexed `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    k: usize,
    pub label_names: Vec<String>,
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![0u64; k * k];
    for (i, (&t, &p)) in true_labels.iter().zip(predicted).enumerate() {
        if t >= k || p >= k {
            return Err(Error::Data(format!(
                "sample {i}: label pair ({t}, {p}) outside 0..{k}"
            )));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        k,
        label_names: (0..k).map(|i| i.to_string()).collect(),
    })
}

impl ConfusionMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Data("confusion matrix must be square".into()));
        }
        Ok(Self {
            counts: rows.concat(),
            k,
            label_names: (0..k).map(|i| i.to_string()).collect(),
        })
    }

    pub fn with_labels(mut self, names: &[String]) -> Self {
        if names.len() == self.k {
            self.label_names = names.to_vec();
        }
        self
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        (0..self.k).map(|j| self.get(class, j)).sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, class)).sum()
    }

    /// CSV with a header row and a leading column of class names.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(&mut w);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.label_names.iter().cloned());
        out.write_record(&header)?;
        for i in 0..self.k {
            let mut rec = vec![self.label_names[i].clone()];
            rec.extend((0..self.k).map(|j| self.get(i, j).to_string()));
            out.write_record(&rec)?;
        }
        out.flush()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No predictions for this class; precision reported as 0.
    pub precision_undefined: bool,
    /// No true samples of this class; recall reported as 0.
    pub recall_undefined: bool,
}

/// All values are percentages in `[0, 100]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub samples: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub test_seconds: Option<f64>,
}

/// Rounds a percentage to the two decimals used in reports.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if cm.k == 0 || total == 0 {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let (col, row) = (cm.col_sum(c), cm.row_sum(c));
            let precision = if col == 0 { 0.0 } else { tp / col as f64 };
            let recall = if row == 0 { 0.0 } else { tp / row as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: cm.label_names[c].clone(),
                support: row,
                precision: 100.0 * precision,
                recall: 100.0 * recall,
                f1: 100.0 * f1,
                precision_undefined: col == 0,
                recall_undefined: row == 0,
            }
        })
        .collect();
    let k = cm.k as f64;
    Ok(MetricsReport {
        samples: total,
        accuracy: 100.0 * cm.trace() as f64 / total as f64,
        macro_precision: per_class.iter().map(|c| c.precision).sum::<f64>() / k,
        macro_recall: per_class.iter().map(|c| c.recall).sum::<f64>() / k,
        macro_f1: per_class.iter().map(|c| c.f1).sum::<f64>() / k,
        per_class,
        test_seconds: None,
    })
}

impl MetricsReport {
    pub fn flagged_classes(&self) -> Vec<&str> {
        self.per_class
            .iter()
            .filter(|c| c.precision_undefined || c.recall_undefined)
            .map(|c| c.class.as_str())
            .collect()
    }

    /// `key=value` lines, percentages to two decimals.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        s += &format!("samples={}\n", self.samples);
        s += &format!("accuracy={:.2}\n", self.accuracy);
        s += &format!("macro_precision={:.2}\n", self.macro_precision);
        s += &format!("macro_recall={:.2}\n", self.macro_recall);
        s += &format!("macro_f1={:.2}\n", self.macro_f1);
        if let Some(t) = self.test_seconds {
            s += &format!("test_seconds={t:.4}\n");
        }
        for c in &self.per_class {
            s += &format!(
                "class.{}.precision={:.2}\nclass.{}.recall={:.2}\nclass.{}.f1={:.2}\nclass.{}.support={}\n",
                c.class, c.precision, c.class, c.recall, c.class, c.f1, c.class, c.support
            );
            if c.precision_undefined || c.recall_undefined {
                s += &format!("class.{}.flagged=true\n", c.class);
            }
        }
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10}",
            "Accuracy", "Precision", "Recall", "F1-score"
        )?;
        writeln!(
            f,
            "{:<10.2} {:>10.2} {:>10.2} {:>10.2}",
            self.accuracy, self.macro_precision, self.macro_recall, self.macro_f1
        )?;
        writeln!(f)?;
        let width = self
            .per_class
            .iter()
            .map(|c| c.class.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(
            f,
            "{:<width$} {:>9} {:>9} {:>9} {:>9}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for c in &self.per_class {
            let flag = if c.precision_undefined || c.recall_undefined {
                " *"
            } else {
                ""
            };
            writeln!(
                f,
                "{:<width$} {:>9.2} {:>9.2} {:>9.2} {:>9}{flag}",
                c.class, c.precision, c.recall, c.f1, c.support
            )?;
        }
        if !self.flagged_classes().is_empty() {
            writeln!(f, "* zero denominator: metric reported as 0")?;
        }
        if let Some(t) = self.test_seconds {
            writeln!(f, "test time: {t:.4} s")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedInference {
    pub predictions: Vec<usize>,
    /// Median wall time of one full pass.
    pub seconds_per_pass: f64,
    pub rows_per_second: f64,
    pub pass_seconds: Vec<f64>,
}

pub fn timed_inference(
    params: &ModelParams,
    features: &FeatureMatrix,
    repeat: usize,
) -> Result<TimedInference> {
    if repeat == 0 {
        return Err(Error::Config("repeat must be >= 1".into()));
    }
    let mut predictions: Option<Vec<usize>> = None;
    let mut times = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let start = Instant::now();
        let p = predict(params, features)?;
        times.push(start.elapsed().as_secs_f64());
        match &predictions {
            Some(prev) if *prev != p => {
                return Err(Error::Internal("predictions changed between passes".into()))
            }
            Some(_) => {}
            None => predictions = Some(p),
        }
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Ok(TimedInference {
        predictions: predictions.expect("repeat >= 1"),
        seconds_per_pass: median,
        rows_per_second: features.n_rows() as f64 / median.max(1e-12),
        pass_seconds: times,
    })
}
