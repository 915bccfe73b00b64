use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use fnv::FnvHasher;

use crate::error::{Error, Result};

use super::schema::{CategoricalColumns, PrepSchema};
use super::table::{Cell, CellKey, RawTable};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub rows_in: usize,
    pub dropped_columns: Vec<String>,
    /// Listed in the schema but not present in the table.
    pub absent_drop_columns: Vec<String>,
    pub rows_with_missing: usize,
    pub duplicate_rows: usize,
    pub rows_out: usize,
}

/// Drops schema columns, then rows with any missing cell, then exact
/// duplicate rows (first occurrence kept), in that order.
pub fn clean(table: &RawTable, schema: &PrepSchema) -> Result<(RawTable, CleanReport)> {
    schema.validate()?;
    if table.column_index(&schema.label_column).is_none() {
        return Err(Error::Config(format!(
            "label column {:?} not in table",
            schema.label_column
        )));
    }
    if let CategoricalColumns::Listed(cats) = &schema.categorical_columns {
        if let Some(c) = cats.iter().find(|c| table.column_index(c).is_none()) {
            return Err(Error::Config(format!(
                "categorical column {c:?} not in table"
            )));
        }
    }

    let mut report = CleanReport {
        rows_in: table.n_rows(),
        ..Default::default()
    };
    for d in &schema.drop_columns {
        if table.column_index(d).is_some() {
            report.dropped_columns.push(d.clone());
        } else {
            report.absent_drop_columns.push(d.clone());
        }
    }
    let keep_cols: Vec<usize> = (0..table.n_cols())
        .filter(|&c| !schema.drop_columns.contains(&table.columns()[c]))
        .collect();
    let narrowed = table.select_columns(&keep_cols);

    let complete: Vec<usize> = (0..narrowed.n_rows())
        .filter(|&r| !narrowed.row(r).iter().any(Cell::is_missing))
        .collect();
    report.rows_with_missing = narrowed.n_rows() - complete.len();

    let unique = dedup_rows(&narrowed, &complete);
    report.duplicate_rows = complete.len() - unique.len();
    report.rows_out = unique.len();
    Ok((narrowed.select_rows(&unique), report))
}

fn row_keys(row: &[Cell]) -> impl Iterator<Item = CellKey> + '_ {
    row.iter().map(Cell::key)
}

/// Indices of first occurrences among `candidates`, in order.
pub(crate) fn dedup_rows(table: &RawTable, candidates: &[usize]) -> Vec<usize> {
    let mut seen: HashMap<u64, Vec<usize>> = HashMap::with_capacity(candidates.len());
    let mut kept = Vec::with_capacity(candidates.len());
    for &r in candidates {
        let row = table.row(r);
        let mut h = FnvHasher::default();
        for k in row_keys(row) {
            k.hash(&mut h);
        }
        let bucket = seen.entry(h.finish()).or_default();
        let dup = bucket
            .iter()
            .any(|&prev| row_keys(table.row(prev)).eq(row_keys(row)));
        if !dup {
            bucket.push(r);
            kept.push(r);
        }
    }
    kept
}
