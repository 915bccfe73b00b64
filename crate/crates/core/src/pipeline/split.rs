use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

use super::encode::LabeledDataset;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes with fewer than two rows, placed wholly in `train`.
    pub singleton_classes: Vec<usize>,
}

/// Stratified partition of row indices. Each class with `n >= 2` rows puts
/// `round(n * (1 - train_fraction))` rows, clamped to `1..n`, into the test
/// side. Both sides are returned in ascending row order.
pub fn stratified_indices(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::Data(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        by_class[y].push(i);
    }
    let mut out = SplitIndices::default();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        let n = rows.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            log::warn!("class {class} has {n} row(s); assigning all to train");
            out.singleton_classes.push(class);
            out.train.extend(rows);
            continue;
        }
        let n_test = ((n as f64 * (1.0 - train_fraction)).round() as usize).clamp(1, n - 1);
        rows.shuffle(&mut rng::seeded(seed, rng::SPLIT, class as u64));
        out.test.extend_from_slice(&rows[..n_test]);
        out.train.extend_from_slice(&rows[n_test..]);
    }
    out.train.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

pub fn split(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let idx = stratified_indices(&dataset.labels, dataset.num_classes(), train_fraction, seed)?;
    Ok((dataset.subset(&idx.train), dataset.subset(&idx.test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_eighty_twenty() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let s = stratified_indices(&labels, 2, 0.8, 1).unwrap();
        for class in 0..2 {
            assert_eq!(s.test.iter().filter(|&&i| labels[i] == class).count(), 10);
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == class).count(), 40);
        }
    }

    #[test]
    fn seeded_and_exhaustive() {
        let labels: Vec<usize> = (0..57).map(|i| (i * 7) % 3).collect();
        let a = stratified_indices(&labels, 3, 0.7, 42).unwrap();
        assert_eq!(a, stratified_indices(&labels, 3, 0.7, 42).unwrap());
        assert_ne!(a, stratified_indices(&labels, 3, 0.7, 43).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_class_goes_to_train() {
        let labels = vec![0, 0, 0, 1];
        let s = stratified_indices(&labels, 2, 0.5, 0).unwrap();
        assert!(s.train.contains(&3));
        assert_eq!(s.singleton_classes, vec![1]);
    }

    #[test]
    fn two_rows_keep_one_each_side() {
        let s = stratified_indices(&[0, 0], 1, 0.99, 0).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
    }

    #[test]
    fn fraction_bounds() {
        assert!(stratified_indices(&[0, 1], 2, 0.0, 0).is_err());
        assert!(stratified_indices(&[0, 1], 2, 1.0, 0).is_err());
        assert!(stratified_indices(&[0, 5], 2, 0.5, 0).is_err());
    }
}
