//! Per-run key/value record written next to a command's primary output.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use toml::{Table, Value};

pub struct Manifest {
    subcommand: &'static str,
    started: DateTime<Utc>,
    seed: Option<u64>,
    inputs: Table,
    outputs: Table,
    config: Table,
    results: Table,
}

pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .unwrap_or_default()
        .to_os_string();
    name.push(".manifest");
    primary_output.with_file_name(name)
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

impl Manifest {
    pub fn start(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            started: Utc::now(),
            seed: None,
            inputs: Table::new(),
            outputs: Table::new(),
            config: Table::new(),
            results: Table::new(),
        }
    }

    pub fn input(&mut self, key: &str, path: &Path) -> &mut Self {
        self.inputs.insert(key.into(), path_value(path));
        self
    }

    pub fn output(&mut self, key: &str, path: &Path) -> &mut Self {
        self.outputs.insert(key.into(), path_value(path));
        self
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    /// Flattens any serialisable config into the `[config]` section.
    pub fn config(&mut self, prefix: &str, value: &impl Serialize) -> Result<&mut Self> {
        let table = Table::try_from(value).context("serialising config for manifest")?;
        for (k, v) in table {
            let key = if prefix.is_empty() {
                k
            } else {
                format!("{prefix}.{k}")
            };
            self.config.insert(key, v);
        }
        Ok(self)
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) -> &mut Self {
        self.results.insert(key.into(), value.into());
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut doc = Table::new();
        let stamp =
            |t: DateTime<Utc>| Value::String(t.to_rfc3339_opts(SecondsFormat::Millis, true));
        doc.insert("subcommand".into(), Value::String(self.subcommand.into()));
        doc.insert(
            "version".into(),
            Value::String(env!("CARGO_PKG_VERSION").into()),
        );
        doc.insert(
            "toolchain".into(),
            Value::String(env!("CNN_IDS_RUSTC_VERSION").into()),
        );
        doc.insert("started".into(), stamp(self.started));
        doc.insert("finished".into(), stamp(Utc::now()));
        if let Some(s) = self.seed {
            // toml integers are i64
            doc.insert("seed".into(), Value::String(s.to_string()));
        }
        for (name, t) in [
            ("inputs", &self.inputs),
            ("outputs", &self.outputs),
            ("config", &self.config),
            ("results", &self.results),
        ] {
            if !t.is_empty() {
                doc.insert(name.into(), Value::Table(t.clone()));
            }
        }
        let text = toml::to_string(&doc).context("formatting manifest")?;
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}
