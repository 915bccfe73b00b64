use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Zscore,
    Minmax,
    None,
}

/// Which feature columns are one-hot encoded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum CategoricalColumns {
    /// Every column holding at least one non-numeric cell.
    #[default]
    Auto,
    Listed(Vec<String>),
}

impl Serialize for CategoricalColumns {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CategoricalColumns::Auto => s.serialize_str("auto"),
            CategoricalColumns::Listed(v) => v.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for CategoricalColumns {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Word(String),
            List(Vec<String>),
        }
        match Repr::deserialize(d)? {
            Repr::Word(w) if w == "auto" => Ok(CategoricalColumns::Auto),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "categorical_columns must be \"auto\" or a list, got {w:?}"
            ))),
            Repr::List(v) => Ok(CategoricalColumns::Listed(v)),
        }
    }
}

/// Identifier, timestamp, address, URI and payload columns of the
/// Edge-IIoTset CSV, plus its binary `Attack_label` (a copy of the target).
pub const EDGE_IIOT_DROP_COLUMNS: &[&str] = &[
    "frame.time",
    "ip.src_host",
    "ip.dst_host",
    "arp.src.proto_ipv4",
    "arp.dst.proto_ipv4",
    "http.file_data",
    "http.request.full_uri",
    "icmp.transmit_timestamp",
    "http.request.uri.query",
    "tcp.options",
    "tcp.payload",
    "tcp.srcport",
    "tcp.dstport",
    "udp.port",
    "mqtt.msg",
    "Attack_label",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSchema {
    pub drop_columns: Vec<String>,
    pub label_column: String,
    pub categorical_columns: CategoricalColumns,
    pub normalization: Normalization,
    pub max_cardinality: usize,
}

impl Default for PrepSchema {
    fn default() -> Self {
        Self {
            drop_columns: EDGE_IIOT_DROP_COLUMNS
                .iter()
                .map(|s| s.to_string())
                .collect(),
            label_column: "Attack_type".into(),
            categorical_columns: CategoricalColumns::Auto,
            normalization: Normalization::Zscore,
            max_cardinality: 64,
        }
    }
}

impl PrepSchema {
    pub fn with_label(label_column: impl Into<String>) -> Self {
        Self {
            drop_columns: Vec::new(),
            label_column: label_column.into(),
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.label_column.is_empty() {
            return Err(Error::Config("label_column is empty".into()));
        }
        if self.drop_columns.contains(&self.label_column) {
            return Err(Error::Config(format!(
                "label column {:?} is also listed in drop_columns",
                self.label_column
            )));
        }
        if let CategoricalColumns::Listed(cats) = &self.categorical_columns {
            if let Some(c) = cats.iter().find(|c| self.drop_columns.contains(c)) {
                return Err(Error::Config(format!(
                    "column {c:?} is both categorical and dropped"
                )));
            }
            if cats.contains(&self.label_column) {
                return Err(Error::Config(
                    "label column cannot be a categorical feature".into(),
                ));
            }
        }
        if self.max_cardinality == 0 {
            return Err(Error::Config("max_cardinality must be >= 1".into()));
        }
        Ok(())
    }
}
