//! Generated datasets with known structure, for tests and smoke runs.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pipeline::{FeatureMatrix, LabeledDataset, NormParam};
use crate::rng;

/// Gaussian blobs around sign-pattern centroids (`±2` per feature), kept
/// only when a sample is closer to its own centroid than to any other by a
/// squared-distance margin. Nearest-centroid regions are half-space
/// intersections, so the result is linearly separable with margin.
pub fn separable_dataset(
    rows: usize,
    features: usize,
    classes: usize,
    seed: u64,
) -> LabeledDataset {
    assert!(classes >= 2 && features >= 1);
    let mut rng = rng::seeded(seed, 100, 0);
    let centroids: Vec<Vec<f64>> = {
        let mut cs: Vec<Vec<f64>> = Vec::with_capacity(classes);
        while cs.len() < classes {
            let c: Vec<f64> = (0..features)
                .map(|_| if rng.random::<bool>() { 2.0 } else { -2.0 })
                .collect();
            let min_diff = cs
                .iter()
                .map(|o| o.iter().zip(&c).filter(|(a, b)| a != b).count())
                .min()
                .unwrap_or(features);
            if min_diff * 4 >= features {
                cs.push(c);
            }
        }
        cs
    };
    let noise = Normal::new(0.0, 0.6).expect("valid std");
    let margin = 4.0;
    let mut data = Vec::with_capacity(rows * features);
    let mut labels = Vec::with_capacity(rows);
    while labels.len() < rows {
        let y = labels.len() % classes;
        let x: Vec<f64> = centroids[y]
            .iter()
            .map(|&c| c + noise.sample(&mut rng))
            .collect();
        let d2 = |c: &Vec<f64>| c.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let own = d2(&centroids[y]);
        let other = (0..classes)
            .filter(|&k| k != y)
            .map(|k| d2(&centroids[k]))
            .fold(f64::INFINITY, f64::min);
        if own + margin <= other {
            data.extend(x.iter().map(|&v| v as f32));
            labels.push(y);
        }
    }
    LabeledDataset {
        features: FeatureMatrix::new(rows, features, data).expect("sized"),
        labels,
        label_names: (0..classes).map(|k| format!("class{k:02}")).collect(),
        feature_names: (0..features).map(|j| format!("f{j}")).collect(),
        normalization_params: vec![NormParam::IDENTITY; features],
    }
}

/// Writes a dataset as a raw CSV (`f0..fN`, then `label_column` holding
/// class names), the shape the CLI expects.
pub fn write_dataset_csv(
    ds: &LabeledDataset,
    label_column: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = ds.feature_names.join(",");
    header.push(',');
    header.push_str(label_column);
    writeln!(w, "{header}").map_err(io)?;
    for (r, &y) in ds.labels.iter().enumerate() {
        let mut line: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        line.push(ds.label_names[y].clone());
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let a = separable_dataset(100, 16, 4, 5);
        assert_eq!(a, separable_dataset(100, 16, 4, 5));
        for k in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&y| y == k).count(), 25);
        }
        assert!(a.features.data().iter().all(|v| v.is_finite()));
    }
}
