//! Encode-then-split with normalisation fitted on the training rows only.

use super::{stratified_indices, EncodeReport, EncodingMeta, LabeledDataset, PrepSchema, RawTable};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub meta: EncodingMeta,
    /// Row indices into the cleaned table.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub report: EncodeReport,
}

/// Fits categories and labels on all of `table`, splits stratified by
/// class, then fits normalisation on the training part and applies it to
/// both parts.
pub fn prepare(
    table: &RawTable,
    schema: &PrepSchema,
    train_fraction: f64,
    seed: u64,
) -> Result<PreparedSplit> {
    let mut meta = EncodingMeta::fit(table, schema)?;
    let (all, report) = meta.transform(table)?;
    let idx = stratified_indices(&all.labels, all.num_classes(), train_fraction, seed)?;
    let mut train = all.subset(&idx.train);
    let mut test = all.subset(&idx.test);
    meta.fit_normalization(&train.features)?;
    meta.normalize(&mut train);
    meta.normalize(&mut test);
    Ok(PreparedSplit {
        train,
        test,
        meta,
        train_rows: idx.train,
        test_rows: idx.test,
        report,
    })
}
