//! CSV ingestion, cleaning, feature encoding, stratified splitting and
//! class-distribution reporting.

pub mod clean;
pub mod encode;
pub mod prepare;
pub mod schema;
pub mod split;
pub mod stats;
pub mod table;

pub use clean::{clean, CleanReport};
pub use encode::{
    encode, ColumnEncoding, EncodeReport, EncodingMeta, FeatureMatrix, LabeledDataset, NormParam,
};
pub use prepare::{prepare, PreparedSplit};
pub use schema::{CategoricalColumns, Normalization, PrepSchema, EDGE_IIOT_DROP_COLUMNS};
pub use split::{split, stratified_indices, SplitIndices};
pub use stats::{class_stats, table_class_stats, write_class_stats, ClassCount};
pub use table::{load_csv, load_csv_with, read_csv, write_csv, Cell, RawTable};
