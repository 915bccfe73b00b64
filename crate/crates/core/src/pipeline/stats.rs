use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::encode::LabeledDataset;
use super::table::RawTable;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassCount {
    pub class: String,
    pub count: usize,
    pub fraction: f64,
}

fn from_counts(counts: Vec<(String, usize)>) -> Vec<ClassCount> {
    let total: usize = counts.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return Vec::new();
    }
    counts
        .into_iter()
        .map(|(class, count)| ClassCount {
            class,
            count,
            fraction: count as f64 / total as f64,
        })
        .collect()
}

/// Per-class counts in label-index order.
pub fn class_stats(dataset: &LabeledDataset) -> Vec<ClassCount> {
    let mut counts = vec![0usize; dataset.num_classes()];
    for &y in &dataset.labels {
        counts[y] += 1;
    }
    from_counts(dataset.label_names.iter().cloned().zip(counts).collect())
}

/// Per-class counts of a raw table's label column, classes sorted by name.
pub fn table_class_stats(table: &RawTable, label_column: &str) -> Result<Vec<ClassCount>> {
    let idx = table
        .column_index(label_column)
        .ok_or_else(|| Error::Config(format!("label column {label_column:?} not in table")))?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in 0..table.n_rows() {
        let c = table.cell(r, idx);
        *counts.entry(table.display(&c).into_owned()).or_default() += 1;
    }
    Ok(from_counts(counts.into_iter().collect()))
}

/// Writes `class,count,fraction`.
pub fn write_class_stats(stats: &[ClassCount], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "count", "fraction"])?;
    for s in stats {
        w.write_record([
            s.class.clone(),
            s.count.to_string(),
            format!("{:.6}", s.fraction),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
