//! Reproducibility header and output sinks.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};

use lidonor_core::operating::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Everything an output needs to be reproduced.
#[derive(Debug, Clone)]
pub struct Header {
    pub fields: BTreeMap<String, Value>,
}

impl Header {
    pub fn new(command: &str, argv: &[String]) -> Header {
        let mut fields = BTreeMap::new();
        fields.insert("program".into(), json!(format!("lidonor {}", env!("CARGO_PKG_VERSION"))));
        fields.insert("command".into(), json!(command));
        fields.insert("argv".into(), json!(argv));
        Header { fields }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.fields.insert(key.into(), value);
    }

    pub fn csv_block(&self) -> String {
        self.fields.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

/// Destination: a file whose parent must exist, or standard output.
#[derive(Debug, Clone)]
pub struct Sink {
    pub path: Option<PathBuf>,
}

impl Sink {
    pub fn new(path: Option<PathBuf>) -> Result<Sink> {
        if let Some(p) = &path {
            let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
            if !parent.is_dir() {
                bail!(lidonor_core::Error::Validation(format!(
                    "output directory {} does not exist",
                    parent.display()
                )));
            }
        }
        Ok(Sink { path })
    }

    pub fn write(&self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())?;
                out.flush()?;
                Ok(())
            }
        }
    }
}

pub fn render_table(mut table: Table, header: &Header, format: Format) -> Result<String> {
    table.metadata.extend(header.fields.clone());
    Ok(match format {
        Format::Csv => table.to_csv(),
        Format::Json => table.to_json()? + "\n",
    })
}

/// CSV with free-text cells, behind the same header block.
pub fn render_records(header: &Header, columns: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(header.csv_block() + &body)
}

/// A JSON document of the form {"metadata": …, key: payload}.
pub fn render_json(header: &Header, key: &str, payload: Value) -> Result<String> {
    let mut doc = serde_json::Map::new();
    doc.insert("metadata".into(), json!(header.fields));
    doc.insert(key.into(), payload);
    Ok(serde_json::to_string_pretty(&Value::Object(doc))? + "\n")
}
