use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{file_stem, input_files, parse_json, read_to_string};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Document, GtBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtFormat {
    FunsdJson,
    SroieTxt,
    CordJson,
    GenericJson,
}

impl FromStr for GtFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "funsd_json" => Ok(GtFormat::FunsdJson),
            "sroie_txt" => Ok(GtFormat::SroieTxt),
            "cord_json" => Ok(GtFormat::CordJson),
            "generic_json" => Ok(GtFormat::GenericJson),
            other => Err(Error::invalid(format!("unknown ground-truth format {other:?}"))),
        }
    }
}

#[derive(Deserialize)]
struct GenericFile {
    documents: Vec<GenericDoc>,
}

#[derive(Deserialize)]
struct GenericDoc {
    doc_id: String,
    boxes: Vec<GenericBox>,
}

#[derive(Deserialize)]
struct GenericBox {
    bbox: [f64; 4],
    text: String,
}

#[derive(Deserialize)]
struct FunsdFile {
    form: Vec<FunsdEntity>,
}

#[derive(Deserialize)]
struct FunsdEntity {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    text: String,
    #[serde(default)]
    words: Vec<FunsdWord>,
}

#[derive(Deserialize)]
struct FunsdWord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    text: String,
}

#[derive(Deserialize)]
struct CordFile {
    valid_line: Vec<CordLine>,
}

#[derive(Deserialize)]
struct CordLine {
    words: Vec<CordWord>,
}

#[derive(Deserialize)]
struct CordWord {
    quad: CordQuad,
    text: String,
}

#[derive(Deserialize)]
struct CordQuad {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    x3: f64,
    y3: f64,
    x4: f64,
    y4: f64,
}

fn validation(path: &Path, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn make_doc(path: &Path, doc_id: String, boxes: Vec<(Result<BBox>, String)>) -> Result<Document> {
    let mut doc = Document::new(doc_id);
    for (i, (bbox, text)) in boxes.into_iter().enumerate() {
        let bbox = bbox.map_err(|e| validation(path, format!("{}: box {i}: {e}", doc.doc_id)))?;
        doc.gt_boxes.push(GtBox {
            id: format!("g{i}"),
            bbox,
            text,
            order_index: i,
        });
    }
    Ok(doc)
}

fn rect(b: [f64; 4]) -> Result<BBox> {
    BBox::new(b[0], b[1], b[2], b[3])
}

fn parse_sroie(path: &Path, text: &str) -> Result<Document> {
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(9, ',').collect();
        if fields.len() < 9 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", lineno + 1),
                message: format!("expected 8 coordinates and a transcript, got {:?}", line),
            });
        }
        let mut coords = [0.0; 8];
        for (k, f) in fields[..8].iter().enumerate() {
            coords[k] = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}, field {}", lineno + 1, k + 1),
                message: format!("invalid coordinate {f:?}"),
            })?;
        }
        let points: Vec<(f64, f64)> = coords.chunks(2).map(|c| (c[0], c[1])).collect();
        boxes.push((BBox::hull(&points), fields[8].to_owned()));
    }
    make_doc(path, file_stem(path), boxes)
}

/// Reads ground-truth annotations into documents without OCR boxes.
///
/// `path` may be a single file or a directory of files in the format.
/// Quadrilaterals are flattened to their bounding rectangles; list order
/// defines reading order.
pub fn load_gt(path: &Path, format: GtFormat) -> Result<Vec<Document>> {
    let ext = if format == GtFormat::SroieTxt { "txt" } else { "json" };
    let mut docs = Vec::new();
    for file in input_files(path, ext)? {
        let text = read_to_string(&file)?;
        match format {
            GtFormat::GenericJson => {
                let parsed: GenericFile = parse_json(&file, &text)?;
                for d in parsed.documents {
                    let boxes = d.boxes.into_iter().map(|b| (rect(b.bbox), b.text)).collect();
                    docs.push(make_doc(&file, d.doc_id, boxes)?);
                }
            }
            GtFormat::FunsdJson => {
                let parsed: FunsdFile = parse_json(&file, &text)?;
                let mut boxes = Vec::new();
                for entity in parsed.form {
                    if entity.words.is_empty() {
                        if !entity.text.trim().is_empty() {
                            boxes.push((rect(entity.bbox), entity.text));
                        }
                    } else {
                        boxes.extend(entity.words.into_iter().map(|w| (rect(w.bbox), w.text)));
                    }
                }
                docs.push(make_doc(&file, file_stem(&file), boxes)?);
            }
            GtFormat::CordJson => {
                let parsed: CordFile = parse_json(&file, &text)?;
                let boxes = parsed
                    .valid_line
                    .into_iter()
                    .flat_map(|l| l.words)
                    .map(|w| {
                        let q = w.quad;
                        let pts = [(q.x1, q.y1), (q.x2, q.y2), (q.x3, q.y3), (q.x4, q.y4)];
                        (BBox::hull(&pts), w.text)
                    })
                    .collect();
                docs.push(make_doc(&file, file_stem(&file), boxes)?);
            }
            GtFormat::SroieTxt => docs.push(parse_sroie(&file, &text)?),
        }
    }
    let mut ids = std::collections::HashSet::new();
    for d in &docs {
        if !ids.insert(d.doc_id.clone()) {
            return Err(validation(path, format!("duplicate document id {}", d.doc_id)));
        }
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn sroie_lines_become_hulls() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "X51.txt",
            "72,25,326,25,326,64,72,64,TAN WOON YANN\n\
             50,82,440,82,440,121,50,121,BOOK TA .K(TAMAN DAYA) SDN BND\n\
             205,121,285,121,285,139,205,139,789417-W,\n",
        );
        let docs = load_gt(&p, GtFormat::SroieTxt).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.doc_id, "X51");
        assert_eq!(d.gt_boxes.len(), 3);
        assert_eq!(d.gt_boxes[0].bbox, BBox::new(72.0, 25.0, 326.0, 64.0).unwrap());
        assert_eq!(d.gt_boxes[1].text, "BOOK TA .K(TAMAN DAYA) SDN BND");
        assert_eq!(d.gt_boxes[2].text, "789417-W,");
        assert_eq!(d.gt_boxes[2].bbox, BBox::new(205.0, 121.0, 285.0, 139.0).unwrap());
        assert_eq!(d.gt_boxes[2].order_index, 2);
    }

    #[test]
    fn sroie_reports_line_of_malformed_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.txt", "1,2,3,4,5,6,7,8,ok\n1,2,x,4,5,6,7,8,bad\n");
        match load_gt(&p, GtFormat::SroieTxt) {
            Err(Error::Parse { location, .. }) => assert!(location.starts_with("line 2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn generic_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "gt.json",
            r#"{"documents":[{"doc_id":"a","boxes":[{"bbox":[0,0,10,5],"text":"hi"}]},
                             {"doc_id":"b","boxes":[]}]}"#,
        );
        let docs = load_gt(&p, GtFormat::GenericJson).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].gt_boxes[0].text, "hi");
        assert!(docs[1].gt_boxes.is_empty());
    }

    #[test]
    fn funsd_words_in_entity_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "0001.json",
            r#"{"form":[{"box":[0,0,50,10],"text":"DATE: today","label":"question","id":0,
                 "words":[{"box":[0,0,20,10],"text":"DATE:"},{"box":[25,0,50,10],"text":"today"}],"linking":[]},
                {"box":[0,20,10,30],"text":"x","id":1,"words":[{"box":[0,20,10,30],"text":"x"}]}]}"#,
        );
        let docs = load_gt(&p, GtFormat::FunsdJson).unwrap();
        let texts: Vec<&str> = docs[0].gt_boxes.iter().map(|b| b.text.as_str()).collect();
        assert_eq!(texts, ["DATE:", "today", "x"]);
    }

    #[test]
    fn cord_quads_flattened() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "receipt_00001.json",
            r#"{"valid_line":[{"category":"menu.nm","group_id":3,"words":[
                {"quad":{"x1":10,"y1":12,"x2":60,"y2":10,"x3":61,"y3":30,"x4":9,"y4":31},"text":"COFFEE","is_key":0}]}],
               "meta":{"image_id":1}}"#,
        );
        let docs = load_gt(&p, GtFormat::CordJson).unwrap();
        assert_eq!(docs[0].gt_boxes[0].bbox, BBox::new(9.0, 10.0, 61.0, 31.0).unwrap());
    }

    #[test]
    fn malformed_json_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.json", "{\"documents\": [\n  {\"doc_id\": 3}\n]}");
        match load_gt(&p, GtFormat::GenericJson) {
            Err(Error::Parse { path, location, .. }) => {
                assert_eq!(path, p);
                assert!(location.contains("line 2"), "{location}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_and_nan_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "neg.json",
            r#"{"documents":[{"doc_id":"a","boxes":[{"bbox":[-1,0,10,5],"text":"hi"}]}]}"#,
        );
        assert!(matches!(load_gt(&p, GtFormat::GenericJson), Err(Error::Validation { .. })));
        let q = write(dir.path(), "nan.txt", "1,2,3,4,NaN,6,7,8,t\n");
        assert!(load_gt(&q, GtFormat::SroieTxt).is_err());
    }

    #[test]
    fn format_tags() {
        assert_eq!("cord_json".parse::<GtFormat>().unwrap(), GtFormat::CordJson);
        assert!("pdf".parse::<GtFormat>().is_err());
    }
}
