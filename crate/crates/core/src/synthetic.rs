//! Synthetic OCR datasets whose confidences are calibrated by
//! construction: every box is substituted with probability `1 - p`, where
//! `p` is its reported confidence drawn from the noise simulator.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_document, AlignmentResult, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Document, GtBox, OcrBox};
use crate::io::DatasetSplit;
use crate::noise_sim::{NoiseSimulator, RngSeed};

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const GARBLE: &[u8] = b"0123456789";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub train_docs: usize,
    pub val_docs: usize,
    pub test_docs: usize,
    pub boxes_per_doc: usize,
    pub boxes_per_line: usize,
    /// Distinct correct words.
    pub clean_words: usize,
    /// Share of the lexicon made of garbled non-words, which only appear
    /// as substitutions.
    pub garbled_fraction: f64,
    /// Maximum OCR box displacement as a fraction of the box height.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_docs: 150,
            val_docs: 20,
            test_docs: 40,
            boxes_per_doc: 20,
            boxes_per_line: 5,
            clean_words: 60,
            garbled_fraction: 0.4,
            jitter: 0.1,
            seed: 0,
        }
    }
}

/// Words available to the generator; clean words come first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub words: Vec<String>,
    pub num_clean: usize,
}

impl Lexicon {
    pub fn generate<R: Rng + ?Sized>(num_clean: usize, garbled_fraction: f64, rng: &mut R) -> Result<Self> {
        if num_clean < 2 || !(0.0..1.0).contains(&garbled_fraction) {
            return Err(Error::invalid("need at least 2 clean words and a garbled fraction in [0,1)"));
        }
        let num_garbled = (num_clean as f64 * garbled_fraction / (1.0 - garbled_fraction)).round() as usize;
        let mut seen = std::collections::HashSet::new();
        let mut words = Vec::with_capacity(num_clean + num_garbled);
        while words.len() < num_clean {
            let len = rng.gen_range(3..=6);
            let w: String = (0..len).map(|_| *LETTERS.choose(rng).unwrap() as char).collect();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        while words.len() < num_clean + num_garbled {
            let base = words[rng.gen_range(0..num_clean)].clone().into_bytes();
            let mut w = base;
            let k = rng.gen_range(0..w.len());
            w[k] = *GARBLE.choose(rng).unwrap();
            let w = String::from_utf8(w).unwrap();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        Ok(Lexicon { words, num_clean })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_garbled(&self, id: usize) -> bool {
        id >= self.num_clean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub lexicon: Lexicon,
    pub split: DatasetSplit,
}

fn word_box(col: usize, row: usize) -> BBox {
    let (w, h, gap) = (60.0, 20.0, 10.0);
    let x0 = 10.0 + col as f64 * (w + gap);
    let y0 = 10.0 + row as f64 * (h + gap);
    BBox { x0, y0, x1: x0 + w, y1: y0 + h }
}

/// Builds one document: GT draws clean words, the OCR side is the noised
/// sequence on slightly displaced boxes.
pub fn generate_document<R: Rng + ?Sized>(
    doc_id: &str,
    lexicon: &Lexicon,
    noise: &NoiseSimulator,
    cfg: &SyntheticConfig,
    rng: &mut R,
) -> Result<Document> {
    let ids: Vec<u32> = (0..cfg.boxes_per_doc)
        .map(|_| rng.gen_range(0..lexicon.num_clean) as u32)
        .collect();
    let noised = noise.noise_sequence(&ids, rng)?;
    let mut doc = Document::new(doc_id);
    for (i, tok) in noised.iter().enumerate() {
        let gt = word_box(i % cfg.boxes_per_line, i / cfg.boxes_per_line);
        let h = gt.y1 - gt.y0;
        let dx = rng.gen_range(-cfg.jitter..=cfg.jitter) * h;
        let dy = rng.gen_range(-cfg.jitter..=cfg.jitter) * h;
        let ocr = BBox::new(gt.x0 + dx, gt.y0 + dy, gt.x1 + dx, gt.y1 + dy)?;
        doc.gt_boxes.push(GtBox {
            id: format!("g{i}"),
            bbox: gt,
            text: lexicon.words[tok.original_id as usize].clone(),
            order_index: i,
        });
        doc.ocr_boxes.push(OcrBox {
            id: format!("o{i}"),
            bbox: ocr,
            text: lexicon.words[tok.observed_id as usize].clone(),
            confidence: tok.confidence,
        });
    }
    Ok(doc)
}

/// Generates and aligns all three splits.
pub fn generate_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    if cfg.boxes_per_line == 0 || cfg.boxes_per_doc == 0 {
        return Err(Error::invalid("boxes per document and per line must be positive"));
    }
    if !(0.0..0.25).contains(&cfg.jitter) {
        return Err(Error::invalid("jitter must be in [0, 0.25)"));
    }
    let mut rng = RngSeed(cfg.seed).rng();
    let lexicon = Lexicon::generate(cfg.clean_words, cfg.garbled_fraction, &mut rng)?;
    let noise = NoiseSimulator::new(lexicon.len() as u32, &[])?;
    let mut make = |prefix: &str, n: usize| -> Result<Vec<AlignmentResult>> {
        (0..n)
            .map(|i| {
                let doc = generate_document(&format!("{prefix}{i:04}"), &lexicon, &noise, cfg, &mut rng)?;
                Ok(align_document(&doc, DEFAULT_THRESHOLD))
            })
            .collect()
    };
    let train = make("train", cfg.train_docs)?;
    let val = make("val", cfg.val_docs)?;
    let test = make("test", cfg.test_docs)?;
    Ok(SyntheticDataset {
        split: DatasetSplit {
            train,
            val,
            test,
            warnings: Vec::new(),
        },
        lexicon,
    })
}

/// Word sequences from a sparse first-order chain over `lexicon`'s clean
/// words, for pretraining. Each word has `branching` possible successors.
pub fn generate_corpus<R: Rng + ?Sized>(
    lexicon: &Lexicon,
    num_sequences: usize,
    length: usize,
    branching: usize,
    rng: &mut R,
) -> Vec<String> {
    let n = lexicon.num_clean;
    let next: Vec<Vec<usize>> = (0..n)
        .map(|_| (0..branching.max(1)).map(|_| rng.gen_range(0..n)).collect())
        .collect();
    (0..num_sequences)
        .map(|_| {
            let mut w = rng.gen_range(0..n);
            let mut words = Vec::with_capacity(length);
            for _ in 0..length {
                words.push(lexicon.words[w].as_str());
                w = *next[w].choose(rng).unwrap();
            }
            words.join(" ")
        })
        .collect()
}
