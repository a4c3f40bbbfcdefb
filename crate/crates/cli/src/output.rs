use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

/// Embedded in every output: enough to rerun the command.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub options: Value,
    pub seed: Option<u64>,
    pub convention: Value,
}

impl Metadata {
    pub fn new(command: &str, options: impl Serialize, seed: Option<u64>, convention: Value) -> Self {
        Metadata {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            options: serde_json::to_value(options).expect("options serialize"),
            seed,
            convention,
        }
    }
}

/// Writes `{metadata, ...body}` to `out`, or stdout when `out` is `None`.
/// Object bodies are merged so rule files stay readable by the rule loader.
pub fn write_json(out: Option<&Path>, meta: &Metadata, body: Value) -> Result<(), CliError> {
    let doc = match body {
        Value::Object(mut map) => {
            map.insert("metadata".into(), json!(meta));
            Value::Object(map)
        }
        other => json!({ "metadata": meta, "result": other }),
    };
    let text = serde_json::to_string_pretty(&doc).expect("json serializes") + "\n";
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            fs::write(p, text).map_err(|e| CliError::io(p, e))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("-"), e))
        }
    }
}

/// A CSV table with a mandatory header row.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    csv.with_file_name(name)
}

/// Writes the table and its metadata to `<path>.meta.json` beside it.
pub fn write_csv(path: &Path, meta: &Metadata, table: &Table) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::csv(path, e))?;
    w.write_record(&table.header).map_err(|e| CliError::csv(path, e))?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| format!("{v}"))).map_err(|e| CliError::csv(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    let mp = meta_path(path);
    let text = serde_json::to_string_pretty(&json!({ "metadata": meta, "file": path.file_name().map(|f| f.to_string_lossy()) }))
        .expect("json serializes")
        + "\n";
    fs::write(&mp, text).map_err(|e| CliError::io(&mp, e))
}
