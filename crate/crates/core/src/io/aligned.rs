use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_json, read_to_string, write_string, TOOLKIT_VERSION};
use crate::alignment::AlignmentResult;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedHeader {
    pub schema_version: u32,
    pub threshold: f64,
    pub sources: Vec<String>,
    pub toolkit_version: String,
    /// Effective configuration of the run that produced the file.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl AlignedHeader {
    pub fn new(threshold: f64, sources: Vec<String>, config: serde_json::Value) -> Self {
        AlignedHeader {
            schema_version: SCHEMA_VERSION,
            threshold,
            sources,
            toolkit_version: TOOLKIT_VERSION.to_owned(),
            config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedDatasetFile {
    pub header: AlignedHeader,
    pub documents: Vec<AlignmentResult>,
}

impl AlignedDatasetFile {
    pub fn num_components(&self) -> usize {
        self.documents.iter().map(|d| d.components.len()).sum()
    }
}

/// Serializes through `serde_json::Value`, whose maps are ordered, giving
/// sorted keys and shortest round-trip float formatting.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_aligned(path: &Path, dataset: &AlignedDatasetFile) -> Result<()> {
    write_string(path, &to_canonical_json(dataset)?)
}

pub fn load_aligned(path: &Path) -> Result<AlignedDatasetFile> {
    let text = read_to_string(path)?;
    let raw: serde_json::Value = parse_json(path, &text)?;
    let found = raw
        .pointer("/header/schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Validation {
            path: path.to_path_buf(),
            message: "missing header.schema_version".into(),
        })? as u32;
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    parse_json(path, &text)
}
