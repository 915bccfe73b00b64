use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::schema::{CategoricalColumns, Normalization, PrepSchema};
use super::table::{Cell, RawTable};

/// Dense row-major `[rows × cols]` matrix of 32-bit features.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "feature matrix {rows}×{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged feature rows"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Affine rescale applied as `(x - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParam {
    pub offset: f64,
    pub scale: f64,
}

impl NormParam {
    pub const IDENTITY: Self = Self {
        offset: 0.0,
        scale: 1.0,
    };

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnEncoding {
    Numeric {
        name: String,
    },
    Onehot {
        name: String,
        categories: Vec<String>,
    },
}

impl ColumnEncoding {
    pub fn name(&self) -> &str {
        match self {
            ColumnEncoding::Numeric { name } | ColumnEncoding::Onehot { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnEncoding::Numeric { .. } => 1,
            ColumnEncoding::Onehot { categories, .. } => categories.len(),
        }
    }
}

/// Everything needed to turn cleaned raw rows into model inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodingMeta {
    pub columns: Vec<ColumnEncoding>,
    pub label_column: String,
    pub label_names: Vec<String>,
    pub normalization: Normalization,
    pub norm_params: Vec<NormParam>,
    pub feature_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub normalization_params: Vec<NormParam>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn label_name(&self, label: usize) -> &str {
        &self.label_names[label]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
            normalization_params: self.normalization_params.clone(),
        }
    }
}

/// Counters from a transform pass.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncodeReport {
    /// Per categorical column: rows whose category was not seen during fit
    /// (encoded as all zeros).
    pub unseen_categories: BTreeMap<String, usize>,
    /// Missing numeric cells replaced by the column's normalisation offset.
    pub imputed_missing: usize,
}

impl EncodeReport {
    pub fn total_unseen(&self) -> usize {
        self.unseen_categories.values().sum()
    }
}

impl EncodingMeta {
    /// Fits categories and label names. Normalisation parameters start as
    /// identity; see [`EncodingMeta::fit_normalization`].
    pub fn fit(table: &RawTable, schema: &PrepSchema) -> Result<Self> {
        schema.validate()?;
        let label_idx = table.column_index(&schema.label_column).ok_or_else(|| {
            Error::Config(format!(
                "label column {:?} not in table",
                schema.label_column
            ))
        })?;
        let mut label_set = BTreeSet::new();
        for r in 0..table.n_rows() {
            let c = table.cell(r, label_idx);
            if c.is_missing() {
                return Err(Error::Data(format!("row {} has no label", r + 1)));
            }
            label_set.insert(table.display(&c).into_owned());
        }

        let listed = match &schema.categorical_columns {
            CategoricalColumns::Auto => None,
            CategoricalColumns::Listed(v) => Some(v),
        };
        let mut columns = Vec::new();
        for (ci, name) in table.columns().iter().enumerate() {
            if ci == label_idx || schema.drop_columns.contains(name) {
                continue;
            }
            let has_text = (0..table.n_rows()).any(|r| matches!(table.cell(r, ci), Cell::Text(_)));
            let categorical = match listed {
                Some(v) => {
                    if has_text && !v.contains(name) {
                        return Err(Error::Data(format!(
                            "column {name:?} has text values but is not declared categorical"
                        )));
                    }
                    v.contains(name)
                }
                None => has_text,
            };
            if !categorical {
                columns.push(ColumnEncoding::Numeric { name: name.clone() });
                continue;
            }
            let mut cats = BTreeSet::new();
            for r in 0..table.n_rows() {
                let c = table.cell(r, ci);
                if !c.is_missing() {
                    cats.insert(table.display(&c).into_owned());
                    if cats.len() > schema.max_cardinality {
                        return Err(Error::Data(format!(
                            "categorical column {name:?} exceeds the cardinality cap of {}",
                            schema.max_cardinality
                        )));
                    }
                }
            }
            columns.push(ColumnEncoding::Onehot {
                name: name.clone(),
                categories: cats.into_iter().collect(),
            });
        }
        if let Some(v) = listed {
            if let Some(missing) = v.iter().find(|c| table.column_index(c).is_none()) {
                return Err(Error::Config(format!(
                    "categorical column {missing:?} not in table"
                )));
            }
        }

        let feature_names: Vec<String> = columns
            .iter()
            .flat_map(|c| match c {
                ColumnEncoding::Numeric { name } => vec![name.clone()],
                ColumnEncoding::Onehot { name, categories } => {
                    categories.iter().map(|k| format!("{name}={k}")).collect()
                }
            })
            .collect();
        Ok(Self {
            norm_params: vec![NormParam::IDENTITY; feature_names.len()],
            feature_names,
            columns,
            label_column: schema.label_column.clone(),
            label_names: label_set.into_iter().collect(),
            normalization: schema.normalization,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Raw table columns the encoder reads, excluding the label.
    pub fn input_columns(&self) -> Vec<&str> {
        self.columns.iter().map(ColumnEncoding::name).collect()
    }

    fn numeric_mask(&self) -> Vec<bool> {
        self.columns
            .iter()
            .flat_map(|c| {
                std::iter::repeat_n(matches!(c, ColumnEncoding::Numeric { .. }), c.width())
            })
            .collect()
    }

    /// Fits per-feature normalisation on `features`, which must be encoded
    /// with identity parameters. One-hot features and zero-variance columns
    /// keep identity parameters.
    pub fn fit_normalization(&mut self, features: &FeatureMatrix) -> Result<()> {
        if features.n_cols() != self.n_features() {
            return Err(Error::shape(format!(
                "normalisation fit on {} columns, encoder has {}",
                features.n_cols(),
                self.n_features()
            )));
        }
        let numeric = self.numeric_mask();
        let n = features.n_rows();
        for (j, param) in self.norm_params.iter_mut().enumerate() {
            *param = NormParam::IDENTITY;
            if !numeric[j] || n == 0 || self.normalization == Normalization::None {
                continue;
            }
            let col = (0..n).map(|r| features.row(r)[j] as f64);
            *param = match self.normalization {
                Normalization::Zscore => {
                    let mean = col.clone().sum::<f64>() / n as f64;
                    let var = col.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
                    let std = var.sqrt();
                    if std > 1e-12 * mean.abs().max(1.0) {
                        NormParam {
                            offset: mean,
                            scale: std,
                        }
                    } else {
                        NormParam::IDENTITY
                    }
                }
                Normalization::Minmax => {
                    let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                        (lo.min(x), hi.max(x))
                    });
                    if hi > lo {
                        NormParam {
                            offset: lo,
                            scale: hi - lo,
                        }
                    } else {
                        NormParam::IDENTITY
                    }
                }
                Normalization::None => NormParam::IDENTITY,
            };
        }
        Ok(())
    }

    /// Applies stored normalisation to features encoded with identity params.
    pub fn normalize(&self, dataset: &mut LabeledDataset) {
        let cols = dataset.features.n_cols();
        for row in dataset.features.data.chunks_exact_mut(cols) {
            for (x, p) in row.iter_mut().zip(&self.norm_params) {
                *x = p.apply(*x as f64) as f32;
            }
        }
        dataset.normalization_params = self.norm_params.clone();
    }

    /// Encodes the feature columns of `table`; the label column is not read.
    pub fn transform_features(&self, table: &RawTable) -> Result<(FeatureMatrix, EncodeReport)> {
        let missing: Vec<&str> = self
            .input_columns()
            .into_iter()
            .filter(|c| table.column_index(c).is_none())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "model expects {} input columns ({} encoded features); data has {} columns and is missing {}: {:?}",
                self.columns.len(),
                self.n_features(),
                table.n_cols(),
                missing.len(),
                missing
            )));
        }
        let sources: Vec<usize> = self
            .columns
            .iter()
            .map(|c| table.column_index(c.name()).expect("checked"))
            .collect();
        let lookups: Vec<HashMap<&str, usize>> = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnEncoding::Onehot { categories, .. } => categories
                    .iter()
                    .enumerate()
                    .map(|(i, k)| (k.as_str(), i))
                    .collect(),
                ColumnEncoding::Numeric { .. } => HashMap::new(),
            })
            .collect();

        let width = self.n_features();
        let mut report = EncodeReport::default();
        let mut data = vec![0f32; table.n_rows() * width];
        for (r, out) in data
            .chunks_exact_mut(width.max(1))
            .enumerate()
            .take(table.n_rows())
        {
            let mut j = 0;
            for ((col, &src), lookup) in self.columns.iter().zip(&sources).zip(&lookups) {
                let cell = table.cell(r, src);
                match col {
                    ColumnEncoding::Numeric { name } => {
                        let p = self.norm_params[j];
                        let x = match cell {
                            Cell::Missing => {
                                report.imputed_missing += 1;
                                p.offset
                            }
                            Cell::Text(_) => {
                                return Err(Error::Data(format!(
                                    "row {}: numeric column {name:?} holds text {:?}",
                                    r + 1,
                                    table.display(&cell)
                                )))
                            }
                            c => c.as_f64().expect("numeric cell"),
                        };
                        out[j] = p.apply(x) as f32;
                        j += 1;
                    }
                    ColumnEncoding::Onehot { name, categories } => {
                        if !cell.is_missing() {
                            match lookup.get(table.display(&cell).as_ref()) {
                                Some(&k) => out[j + k] = 1.0,
                                None => {
                                    *report.unseen_categories.entry(name.clone()).or_default() += 1
                                }
                            }
                        } else {
                            *report.unseen_categories.entry(name.clone()).or_default() += 1;
                        }
                        j += categories.len();
                    }
                }
            }
        }
        Ok((FeatureMatrix::new(table.n_rows(), width, data)?, report))
    }

    pub fn encode_labels(&self, table: &RawTable) -> Result<Vec<usize>> {
        let idx = table.column_index(&self.label_column).ok_or_else(|| {
            Error::Data(format!("label column {:?} not in data", self.label_column))
        })?;
        (0..table.n_rows())
            .map(|r| {
                let c = table.cell(r, idx);
                let name = table.display(&c);
                self.label_names
                    .binary_search_by(|n| n.as_str().cmp(name.as_ref()))
                    .map_err(|_| Error::Data(format!("row {}: unknown class {name:?}", r + 1)))
            })
            .collect()
    }

    pub fn transform(&self, table: &RawTable) -> Result<(LabeledDataset, EncodeReport)> {
        let labels = self.encode_labels(table)?;
        let (features, report) = self.transform_features(table)?;
        Ok((
            LabeledDataset {
                features,
                labels,
                label_names: self.label_names.clone(),
                feature_names: self.feature_names.clone(),
                normalization_params: self.norm_params.clone(),
            },
            report,
        ))
    }
}

/// One-shot encode. Without `fit_stats`, categories, labels and
/// normalisation are all fitted on `table`; with it, they are reused.
pub fn encode(
    table: &RawTable,
    schema: &PrepSchema,
    fit_stats: Option<&EncodingMeta>,
) -> Result<(LabeledDataset, EncodingMeta, EncodeReport)> {
    let meta = match fit_stats {
        Some(m) => m.clone(),
        None => {
            let mut m = EncodingMeta::fit(table, schema)?;
            let (raw, _) = m.transform_features(table)?;
            m.fit_normalization(&raw)?;
            m
        }
    };
    let (ds, report) = meta.transform(table)?;
    Ok((ds, meta, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> RawTable {
        RawTable::from_strings(
            &["proto", "bytes", "flag", "label"],
            &[
                &["tcp", "10", "1", "dos"],
                &["udp", "20", "1", "normal"],
                &["tcp", "30", "1", "normal"],
                &["icmp", "40", "1", "scan"],
                &["udp", "50", "1", "dos"],
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_is_lexicographic() {
        let t = RawTable::from_strings(&["p", "y"], &[&["udp", "a"], &["tcp", "b"]]).unwrap();
        let (ds, meta, _) = encode(&t, &PrepSchema::with_label("y"), None).unwrap();
        assert_eq!(meta.feature_names, vec!["p=tcp", "p=udp"]);
        assert_eq!(ds.features.row(1), &[1.0, 0.0]);
        assert_eq!(ds.features.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn constant_column_passes_through_zscore() {
        let (ds, meta, _) = encode(&toy(), &PrepSchema::with_label("label"), None).unwrap();
        let flag = meta.feature_names.iter().position(|n| n == "flag").unwrap();
        assert!(ds.features.rows().all(|r| r[flag] == 1.0));
        assert_eq!(meta.norm_params[flag], NormParam::IDENTITY);
    }

    #[test]
    fn hand_worked_toy_matrix() {
        // bytes: mean 30, population std sqrt(200) = 14.142135...
        let (ds, meta, rep) = encode(&toy(), &PrepSchema::with_label("label"), None).unwrap();
        assert_eq!(
            meta.feature_names,
            vec!["proto=icmp", "proto=tcp", "proto=udp", "bytes", "flag"]
        );
        assert_eq!(meta.label_names, vec!["dos", "normal", "scan"]);
        assert_eq!(ds.labels, vec![0, 1, 1, 2, 0]);
        let s = 200f64.sqrt();
        let expected: [[f64; 5]; 5] = [
            [0.0, 1.0, 0.0, -20.0 / s, 1.0],
            [0.0, 0.0, 1.0, -10.0 / s, 1.0],
            [0.0, 1.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 10.0 / s, 1.0],
            [0.0, 0.0, 1.0, 20.0 / s, 1.0],
        ];
        for (r, want) in expected.iter().enumerate() {
            for (got, want) in ds.features.row(r).iter().zip(want) {
                assert!(
                    (*got as f64 - want).abs() < 1e-6,
                    "row {r}: {got} vs {want}"
                );
            }
        }
        assert_eq!(rep, EncodeReport::default());
    }

    #[test]
    fn minmax_scaling() {
        let schema = PrepSchema {
            normalization: Normalization::Minmax,
            ..PrepSchema::with_label("label")
        };
        let (ds, meta, _) = encode(&toy(), &schema, None).unwrap();
        let b = meta
            .feature_names
            .iter()
            .position(|n| n == "bytes")
            .unwrap();
        let col: Vec<f32> = ds.features.rows().map(|r| r[b]).collect();
        assert_eq!(col, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn unseen_category_counted_and_zeroed() {
        let (_, meta, _) = encode(&toy(), &PrepSchema::with_label("label"), None).unwrap();
        let t = RawTable::from_strings(
            &["label", "flag", "bytes", "proto"],
            &[&["dos", "1", "30", "sctp"], &["scan", "1", "30", "tcp"]],
        )
        .unwrap();
        let (ds, rep) = meta.transform(&t).unwrap();
        assert_eq!(&ds.features.row(0)[..3], &[0.0, 0.0, 0.0]);
        assert_eq!(&ds.features.row(1)[..3], &[0.0, 1.0, 0.0]);
        assert_eq!(rep.unseen_categories.get("proto"), Some(&1));
    }

    #[test]
    fn cardinality_cap_names_column() {
        let schema = PrepSchema {
            max_cardinality: 2,
            ..PrepSchema::with_label("label")
        };
        let err = encode(&toy(), &schema, None).unwrap_err();
        assert!(err.to_string().contains("\"proto\""), "{err}");
    }

    #[test]
    fn text_in_undeclared_column_rejected() {
        let schema = PrepSchema {
            categorical_columns: CategoricalColumns::Listed(vec![]),
            ..PrepSchema::with_label("label")
        };
        assert!(matches!(encode(&toy(), &schema, None), Err(Error::Data(_))));
    }

    #[test]
    fn missing_input_column_reports_counts() {
        let (_, meta, _) = encode(&toy(), &PrepSchema::with_label("label"), None).unwrap();
        let t = RawTable::from_strings(&["proto", "label"], &[&["tcp", "dos"]]).unwrap();
        let msg = meta.transform(&t).unwrap_err().to_string();
        assert!(
            msg.contains("3 input columns") && msg.contains("5 encoded"),
            "{msg}"
        );
    }

    #[test]
    fn unknown_label_rejected() {
        let (_, meta, _) = encode(&toy(), &PrepSchema::with_label("label"), None).unwrap();
        let t = RawTable::from_strings(
            &["proto", "bytes", "flag", "label"],
            &[&["tcp", "1", "1", "worm"]],
        )
        .unwrap();
        assert!(meta.transform(&t).is_err());
    }
}
