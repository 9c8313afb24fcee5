//! Two-step OCR to ground-truth alignment.
//!
//! Every OCR box is linked to each GT box covering at least `threshold` of
//! its area, and every GT box to each OCR box covering at least `threshold`
//! of *its* area. The union of both mappings is an undirected bipartite
//! graph whose connected components become the aligned units, sequenced by
//! ground-truth reading order. GT boxes without any link are kept as
//! unmatched components; OCR-only components are dropped and counted.

use serde::{Deserialize, Serialize};

use crate::geometry::{Document, GtBox, OcrBox};

pub const DEFAULT_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchDirection {
    /// The GT box covers enough of the OCR box.
    OcrToGt,
    /// The OCR box covers enough of the GT box.
    GtToOcr,
    Both,
}

/// Edge between the `ocr`-th OCR box and the `gt`-th GT box of a document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEdge {
    pub ocr_id: String,
    pub gt_id: String,
    pub direction: MatchDirection,
    #[serde(skip)]
    pub(crate) ocr_idx: usize,
    #[serde(skip)]
    pub(crate) gt_idx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedComponent {
    pub gt_ids: Vec<String>,
    pub ocr_ids: Vec<String>,
    pub gt_text: String,
    pub ocr_text: String,
    pub confidence: Option<f64>,
    pub is_error: bool,
    pub is_unmatched_gt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub doc_id: String,
    pub components: Vec<AlignedComponent>,
    pub unmatched_ocr_count: usize,
}

/// Lowercases and strips every whitespace character.
pub fn normalize(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn build_match_graph(doc: &Document, threshold: f64) -> Vec<MatchEdge> {
    let mut edges = Vec::new();
    for (oi, o) in doc.ocr_boxes.iter().enumerate() {
        for (gi, g) in doc.gt_boxes.iter().enumerate() {
            // Pairs without overlap never match, even at threshold 0.
            if o.bbox.intersection_area(&g.bbox) <= 0.0 {
                continue;
            }
            let ocr_covered = o.bbox.coverage_by(&g.bbox) >= threshold;
            let gt_covered = g.bbox.coverage_by(&o.bbox) >= threshold;
            let direction = match (ocr_covered, gt_covered) {
                (true, true) => MatchDirection::Both,
                (true, false) => MatchDirection::OcrToGt,
                (false, true) => MatchDirection::GtToOcr,
                (false, false) => continue,
            };
            edges.push(MatchEdge {
                ocr_id: o.id.clone(),
                gt_id: g.id.clone(),
                direction,
                ocr_idx: oi,
                gt_idx: gi,
            });
        }
    }
    edges
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

fn resolve_index<'a, T>(items: &'a [T], idx: usize, id: &str, key: impl Fn(&T) -> &str) -> usize {
    if items.get(idx).is_some_and(|it| key(it) == id) {
        return idx;
    }
    items
        .iter()
        .position(|it| key(it) == id)
        .unwrap_or_else(|| panic!("edge references unknown box id {id}"))
}

/// Groups the bipartite match graph into ordered aligned components.
///
/// Node indices `0..n_ocr` are OCR boxes, `n_ocr..` GT boxes.
pub fn connected_components(doc: &Document, edges: &[MatchEdge]) -> AlignmentResult {
    let n_ocr = doc.ocr_boxes.len();
    let mut dsu = DisjointSet::new(n_ocr + doc.gt_boxes.len());
    for e in edges {
        let oi = resolve_index(&doc.ocr_boxes, e.ocr_idx, &e.ocr_id, |b| &b.id);
        let gi = resolve_index(&doc.gt_boxes, e.gt_idx, &e.gt_id, |b| &b.id);
        dsu.union(oi, n_ocr + gi);
    }

    let mut groups: std::collections::BTreeMap<usize, (Vec<&OcrBox>, Vec<&GtBox>)> =
        Default::default();
    for (i, o) in doc.ocr_boxes.iter().enumerate() {
        groups.entry(dsu.find(i)).or_default().0.push(o);
    }
    for (i, g) in doc.gt_boxes.iter().enumerate() {
        groups.entry(dsu.find(n_ocr + i)).or_default().1.push(g);
    }

    let mut unmatched_ocr_count = 0;
    let mut keyed = Vec::new();
    for (_, (mut ocr, mut gt)) in groups {
        if gt.is_empty() {
            unmatched_ocr_count += ocr.len();
            continue;
        }
        gt.sort_by_key(|g| g.order_index);
        ocr.sort_by(|a, b| {
            a.bbox
                .y0
                .total_cmp(&b.bbox.y0)
                .then(a.bbox.x0.total_cmp(&b.bbox.x0))
                .then_with(|| a.id.cmp(&b.id))
        });
        keyed.push((gt[0].order_index, build_component(&ocr, &gt)));
    }
    keyed.sort_by_key(|(k, _)| *k);

    AlignmentResult {
        doc_id: doc.doc_id.clone(),
        components: keyed.into_iter().map(|(_, c)| c).collect(),
        unmatched_ocr_count,
    }
}

fn build_component(ocr: &[&OcrBox], gt: &[&GtBox]) -> AlignedComponent {
    let gt_text = join(gt.iter().map(|g| g.text.as_str()));
    let ocr_text = join(ocr.iter().map(|o| o.text.as_str()));
    let confidence = if ocr.is_empty() {
        None
    } else {
        Some(ocr.iter().map(|o| o.confidence).sum::<f64>() / ocr.len() as f64)
    };
    let is_unmatched_gt = ocr.is_empty();
    let is_error = if is_unmatched_gt {
        !normalize(&gt_text).is_empty()
    } else {
        normalize(&ocr_text) != normalize(&gt_text)
    };
    AlignedComponent {
        gt_ids: gt.iter().map(|g| g.id.clone()).collect(),
        ocr_ids: ocr.iter().map(|o| o.id.clone()).collect(),
        gt_text,
        ocr_text,
        confidence,
        is_error,
        is_unmatched_gt,
    }
}

fn join<'a>(parts: impl Iterator<Item = &'a str>) -> String {
    parts.collect::<Vec<_>>().join(" ")
}

pub fn align_document(doc: &Document, threshold: f64) -> AlignmentResult {
    let edges = build_match_graph(doc, threshold);
    connected_components(doc, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn ocr(id: &str, b: (f64, f64, f64, f64), text: &str, conf: f64) -> OcrBox {
        OcrBox {
            id: id.into(),
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            text: text.into(),
            confidence: conf,
        }
    }

    fn gt(id: &str, b: (f64, f64, f64, f64), text: &str, order: usize) -> GtBox {
        GtBox {
            id: id.into(),
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            text: text.into(),
            order_index: order,
        }
    }

    fn period_doc() -> Document {
        Document {
            doc_id: "period".into(),
            ocr_boxes: vec![ocr("o0", (0.0, 0.0, 44.0, 10.0), "text.", 0.9)],
            gt_boxes: vec![
                gt("g0", (0.0, 0.0, 40.0, 10.0), "text", 0),
                gt("g1", (40.0, 0.0, 44.0, 10.0), ".", 1),
            ],
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Text. "), "text.");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("A B\tC"), "abc");
    }

    #[test]
    fn period_edges() {
        let edges = build_match_graph(&period_doc(), DEFAULT_THRESHOLD);
        assert_eq!(edges.len(), 2);
        assert_eq!(edges[0].gt_id, "g0");
        assert_eq!(edges[0].direction, MatchDirection::Both);
        assert_eq!(edges[1].gt_id, "g1");
        assert_eq!(edges[1].direction, MatchDirection::GtToOcr);
    }

    #[test]
    fn period_merges_into_one_component() {
        let r = align_document(&period_doc(), DEFAULT_THRESHOLD);
        assert_eq!(r.components.len(), 1);
        let c = &r.components[0];
        assert_eq!(c.gt_text, "text .");
        assert_eq!(normalize(&c.gt_text), "text.");
        assert_eq!(c.ocr_text, "text.");
        assert!(!c.is_error);
        assert_eq!(c.confidence, Some(0.9));
        assert_eq!(r.unmatched_ocr_count, 0);
    }

    #[test]
    fn identical_pair_single_edge() {
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: vec![ocr("o", (1.0, 1.0, 5.0, 3.0), "Hi", 0.7)],
            gt_boxes: vec![gt("g", (1.0, 1.0, 5.0, 3.0), "hi", 0)],
        };
        let edges = build_match_graph(&doc, DEFAULT_THRESHOLD);
        assert_eq!(edges.len(), 1);
        assert_eq!(edges[0].direction, MatchDirection::Both);
        let r = align_document(&doc, DEFAULT_THRESHOLD);
        assert_eq!(r.components.len(), 1);
        assert!(!r.components[0].is_error);
        assert_eq!(r.components[0].confidence, Some(0.7));
    }

    #[test]
    fn disjoint_boxes_no_edges() {
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: vec![ocr("o", (0.0, 0.0, 1.0, 1.0), "a", 0.5)],
            gt_boxes: vec![gt("g", (2.0, 2.0, 3.0, 3.0), "a", 0)],
        };
        assert!(build_match_graph(&doc, 0.0).is_empty());
        let r = align_document(&doc, 0.0);
        assert_eq!(r.components.len(), 1);
        assert!(r.components[0].is_unmatched_gt);
        assert_eq!(r.unmatched_ocr_count, 1);
    }

    #[test]
    fn gt_only_document() {
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: vec![],
            gt_boxes: vec![gt("g", (0.0, 0.0, 3.0, 3.0), "word", 0)],
        };
        let r = align_document(&doc, DEFAULT_THRESHOLD);
        assert_eq!(r.components.len(), 1);
        let c = &r.components[0];
        assert!(c.is_unmatched_gt && c.is_error);
        assert_eq!(c.ocr_text, "");
        assert_eq!(c.confidence, None);
        assert_eq!(r.unmatched_ocr_count, 0);
    }

    #[test]
    fn unmatched_blank_gt_is_not_an_error() {
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: vec![],
            gt_boxes: vec![gt("g", (0.0, 0.0, 3.0, 3.0), "  ", 0)],
        };
        assert!(!align_document(&doc, DEFAULT_THRESHOLD).components[0].is_error);
    }

    #[test]
    fn ocr_only_document() {
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: (0..3)
                .map(|i| {
                    let x = i as f64 * 10.0;
                    ocr(&format!("o{i}"), (x, 0.0, x + 5.0, 5.0), "x", 0.5)
                })
                .collect(),
            gt_boxes: vec![],
        };
        let r = align_document(&doc, DEFAULT_THRESHOLD);
        assert!(r.components.is_empty());
        assert_eq!(r.unmatched_ocr_count, 3);
    }

    #[test]
    fn empty_document() {
        let r = align_document(&Document::new("e"), DEFAULT_THRESHOLD);
        assert!(r.components.is_empty());
        assert_eq!(r.unmatched_ocr_count, 0);
    }

    #[test]
    fn merged_ocr_text_in_reading_order_and_mean_confidence() {
        // One line-level GT box covering two OCR words given in reverse order.
        let doc = Document {
            doc_id: "d".into(),
            ocr_boxes: vec![
                ocr("b", (22.0, 0.0, 40.0, 10.0), "world", 0.6),
                ocr("a", (0.0, 0.0, 20.0, 10.0), "Hello", 0.9),
            ],
            gt_boxes: vec![gt("g", (0.0, 0.0, 40.0, 10.0), "hello world", 0)],
        };
        let r = align_document(&doc, DEFAULT_THRESHOLD);
        assert_eq!(r.components.len(), 1);
        let c = &r.components[0];
        assert_eq!(c.ocr_ids, vec!["a", "b"]);
        assert_eq!(c.ocr_text, "Hello world");
        assert!(!c.is_error);
        assert!((c.confidence.unwrap() - 0.75).abs() < 1e-12);
    }
}
