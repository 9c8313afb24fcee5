//! File formats: annotation readers, OCR records, aligned datasets,
//! dataset splits and pretraining corpora.

mod aligned;
mod corpus;
mod gt;
mod ocr;
mod split;

pub use aligned::{emit_aligned, load_aligned, to_canonical_json, AlignedDatasetFile, AlignedHeader, SCHEMA_VERSION};
pub use corpus::{read_corpus, write_corpus, CorpusHeader, CorpusSequence};
pub use gt::{load_gt, GtFormat};
pub use ocr::{assemble_documents, load_ocr};
pub use split::{split_dataset, DatasetSplit, SplitSpec};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8_lossy(&bytes).into_owned();
    Ok(text.trim_start_matches('\u{feff}').to_owned())
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub(crate) fn write_string(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Files of a directory with the given extension in name order, or the
/// path itself when it is a file.
pub(crate) fn input_files(path: &Path, extension: &str) -> Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case(extension)) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub(crate) fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
