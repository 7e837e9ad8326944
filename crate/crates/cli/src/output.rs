//! Reports, manifests and tables, written with write-then-rename.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::{json, Map, Value};

pub const ARTIFACT: &str = "barlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The deterministic report document.
pub fn report(command: &str, seed: u64, config: Value, results: Value) -> Value {
    json!({ "artifact": ARTIFACT, "version": VERSION, "command": command, "seed": seed, "config": config, "results": results })
}

pub fn to_pretty(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values serialize");
    out.push(b'\n');
    out
}

/// Checks that `doc` is a report and returns its results.
pub fn results_of(doc: &Value) -> anyhow::Result<&Map<String, Value>> {
    if doc.get("artifact").and_then(Value::as_str) != Some(ARTIFACT) {
        bail!("not a {ARTIFACT} report");
    }
    if doc.get("config").is_none() {
        bail!("report has no config echo");
    }
    match doc.get("results") {
        Some(Value::Object(r)) => Ok(r),
        _ => bail!("report has no results object"),
    }
}

/// One CSV file per results entry that is an array of objects.
pub fn tables(results: &Map<String, Value>) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for (name, v) in results {
        if let Some(rows) = v.as_array().filter(|rows| !rows.is_empty() && rows.iter().all(Value::is_object)) {
            out.push((format!("{name}.csv"), csv_table(rows)?));
        }
    }
    Ok(out)
}

fn csv_table(rows: &[Value]) -> anyhow::Result<Vec<u8>> {
    let mut columns: Vec<&str> = Vec::new();
    for row in rows {
        for key in row.as_object().expect("rows are objects").keys() {
            if !columns.contains(&key.as_str()) {
                columns.push(key);
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&columns)?;
    for row in rows {
        w.write_record(columns.iter().map(|c| cell(row.get(*c))))?;
    }
    w.into_inner().context("flushing table")
}

fn cell(v: Option<&Value>) -> String {
    match v {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
    }
}

/// Writes every file to `dir`, each through a temporary name and a rename.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)]) -> anyhow::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &target).with_context(|| format!("renaming {} to {}", tmp.display(), target.display()))?;
        written.push(target);
    }
    Ok(written)
}
