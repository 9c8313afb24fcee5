use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{input_files, parse_json, read_to_string};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Document, OcrBox};

#[derive(Deserialize)]
struct OcrFile {
    documents: Vec<OcrDoc>,
}

#[derive(Deserialize)]
struct OcrDoc {
    doc_id: String,
    boxes: Vec<OcrEntry>,
}

#[derive(Deserialize)]
struct OcrEntry {
    #[serde(default)]
    id: Option<String>,
    bbox: [f64; 4],
    text: String,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Reads generic OCR records (`{"documents": [{"doc_id", "boxes": [...]}]}`)
/// into validated box lists keyed by document id.
pub fn load_ocr(path: &Path) -> Result<BTreeMap<String, Vec<OcrBox>>> {
    let mut out = BTreeMap::new();
    for file in input_files(path, "json")? {
        let parsed: OcrFile = parse_json(&file, &read_to_string(&file)?)?;
        for doc in parsed.documents {
            let invalid = |message: String| Error::Validation {
                path: file.clone(),
                message: format!("{}: {message}", doc.doc_id),
            };
            let mut boxes = Vec::with_capacity(doc.boxes.len());
            let mut ids = std::collections::HashSet::new();
            for (i, entry) in doc.boxes.into_iter().enumerate() {
                let confidence = entry
                    .confidence
                    .ok_or_else(|| invalid(format!("box {i} has no confidence")))?;
                if !(0.0..=1.0).contains(&confidence) {
                    return Err(invalid(format!("box {i} confidence {confidence} outside [0,1]")));
                }
                let [x0, y0, x1, y1] = entry.bbox;
                let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| invalid(format!("box {i}: {e}")))?;
                let id = entry.id.unwrap_or_else(|| format!("o{i}"));
                if !ids.insert(id.clone()) {
                    return Err(invalid(format!("duplicate box id {id}")));
                }
                boxes.push(OcrBox {
                    id,
                    bbox,
                    text: entry.text,
                    confidence,
                });
            }
            if out.insert(doc.doc_id.clone(), boxes).is_some() {
                return Err(Error::Validation {
                    path: file.clone(),
                    message: format!("duplicate document id {}", doc.doc_id),
                });
            }
        }
    }
    Ok(out)
}

/// Attaches OCR boxes to ground-truth skeletons. Documents missing from
/// the OCR side get no OCR boxes; OCR-only documents are reported.
pub fn assemble_documents(
    mut gt_docs: Vec<Document>,
    mut ocr: BTreeMap<String, Vec<OcrBox>>,
) -> (Vec<Document>, Vec<String>) {
    for doc in &mut gt_docs {
        if let Some(boxes) = ocr.remove(&doc.doc_id) {
            doc.ocr_boxes = boxes;
        }
    }
    (gt_docs, ocr.into_keys().collect())
}
