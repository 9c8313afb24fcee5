use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::vocab::{Vocab, CLS, SEP};
use crate::alignment::AlignedComponent;

/// Confidence carried by `[CLS]` and `[SEP]`.
pub const SPECIAL_CONFIDENCE: f64 = 1.0;
/// Confidence for components without any OCR box.
pub const ABSENT_CONFIDENCE: f64 = 0.0;

/// One encoder input: `[CLS] c1 [SEP] c2 [SEP] ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedWindow {
    pub token_ids: Vec<u32>,
    pub confidences: Vec<f64>,
    /// Token range of each component; may be empty.
    pub spans: Vec<Range<usize>>,
    /// Index of each span's component in the input list.
    pub component_indices: Vec<usize>,
    pub labels: Vec<bool>,
}

impl EncodedWindow {
    fn new() -> Self {
        EncodedWindow {
            token_ids: vec![CLS],
            confidences: vec![SPECIAL_CONFIDENCE],
            spans: Vec::new(),
            component_indices: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// Encodes components in order, opening a new window whenever the next
/// component would not fit. A component too long for an empty window is
/// truncated.
pub fn encode_components(
    components: &[AlignedComponent],
    vocab: &Vocab,
    max_seq_len: usize,
) -> Vec<EncodedWindow> {
    assert!(max_seq_len >= 2, "max_seq_len must be at least 2");
    let mut windows = Vec::new();
    let mut cur = EncodedWindow::new();
    for (idx, comp) in components.iter().enumerate() {
        let mut toks = vocab.tokenize(&comp.ocr_text);
        if cur.len() + toks.len() + 1 > max_seq_len && !cur.is_empty() {
            windows.push(std::mem::replace(&mut cur, EncodedWindow::new()));
        }
        toks.truncate(max_seq_len - 1 - cur.len());
        let conf = comp.confidence.unwrap_or(ABSENT_CONFIDENCE);
        let start = cur.len();
        cur.confidences.extend(std::iter::repeat(conf).take(toks.len()));
        cur.token_ids.extend(toks);
        cur.spans.push(start..cur.len());
        cur.token_ids.push(SEP);
        cur.confidences.push(SPECIAL_CONFIDENCE);
        cur.component_indices.push(idx);
        cur.labels.push(comp.is_error);
    }
    if !cur.is_empty() {
        windows.push(cur);
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(text: &str, conf: Option<f64>) -> AlignedComponent {
        AlignedComponent {
            gt_ids: vec![],
            ocr_ids: vec![],
            gt_text: text.into(),
            ocr_text: text.into(),
            confidence: conf,
            is_error: false,
            is_unmatched_gt: conf.is_none(),
        }
    }

    fn vocab() -> Vocab {
        Vocab::build(["hello world a b c"], 100).unwrap()
    }

    #[test]
    fn single_component() {
        let v = vocab();
        let w = encode_components(&[comp("hello", Some(0.9))], &v, 256);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].token_ids, vec![CLS, v.id("hello").unwrap(), SEP]);
        assert_eq!(w[0].confidences, vec![1.0, 0.9, 1.0]);
        assert_eq!(w[0].spans, vec![1..2]);
    }

    #[test]
    fn empty_text_gives_empty_span_after_separator() {
        let v = vocab();
        let w = encode_components(&[comp("hello", Some(0.9)), comp("", None)], &v, 256);
        assert_eq!(w[0].spans, vec![1..2, 3..3]);
        assert_eq!(w[0].token_ids[2], SEP);
    }

    #[test]
    fn absent_confidence_is_zero() {
        let mut c = comp("world", None);
        c.ocr_text = "world".into();
        let w = encode_components(&[c], &vocab(), 256);
        assert_eq!(w[0].confidences, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn splits_at_component_boundaries() {
        let v = vocab();
        let comps: Vec<_> = (0..5).map(|_| comp("a b", Some(0.5))).collect();
        let w = encode_components(&comps, &v, 8);
        // [cls] a b [sep] a b [sep] = 7 tokens per window.
        assert_eq!(w.len(), 3);
        let covered: Vec<usize> = w.iter().flat_map(|x| x.component_indices.clone()).collect();
        assert_eq!(covered, vec![0, 1, 2, 3, 4]);
        for win in &w {
            assert!(win.len() <= 8);
            for pair in win.spans.windows(2) {
                assert!(pair[0].end < pair[1].start);
            }
        }
    }

    #[test]
    fn oversized_component_truncated() {
        let v = vocab();
        let w = encode_components(&[comp("a b c a b c", Some(0.5))], &v, 4);
        assert_eq!(w[0].len(), 4);
        assert_eq!(w[0].spans, vec![1..3]);
    }
}
