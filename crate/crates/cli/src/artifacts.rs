//! Machine-readable artifact writers.
//!
//! Every JSON artifact is checked against its shipped schema before it
//! touches disk, so an emitted file that fails validation is a bug caught
//! at write time, not downstream. Files are pretty-printed with a trailing
//! newline; the CSV trace comes verbatim from the search report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use billiards_core::continuation::RunReport;
use serde::Serialize;

use crate::schema;

/// Search report plus the emission time; the timestamp is the one field
/// excluded from byte-for-byte determinism.
#[derive(Serialize)]
pub struct ReportArtifact<'a> {
    pub timestamp: u64,
    #[serde(flatten)]
    pub report: &'a RunReport,
}

/// Seconds since the Unix epoch.
pub fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Serialize, check against `schema_src`, and write `<dir>/<name>`.
pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    value: &T,
    schema_src: &str,
) -> Result<PathBuf> {
    let as_value = serde_json::to_value(value)?;
    schema::validate(&as_value, schema_src)
        .map_err(|e| anyhow!("internal: {name} failed its own schema: {e}"))?;
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_text(dir, name, &text)
}

/// Write a text artifact under `dir`, creating the directory if needed.
pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}
