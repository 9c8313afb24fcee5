//! OCR quality and calibration metrics.

use serde::{Deserialize, Serialize};

use crate::alignment::{normalize, AlignmentResult};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Edit distance over unicode scalar values, two-row dynamic programme.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn cer(ocr_seq: &str, gt_seq: &str) -> Result<f64> {
    let n = gt_seq.chars().count();
    if n == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(levenshtein(ocr_seq, gt_seq) as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub num_bins: usize,
    /// Compare lowercased, whitespace-free sequences.
    pub normalize: bool,
    /// Pool edit operations over the corpus instead of averaging per document.
    pub pooled_cer: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            num_bins: DEFAULT_BINS,
            normalize: true,
            pooled_cer: false,
        }
    }
}

fn document_sequences(result: &AlignmentResult, normalized: bool) -> (String, String) {
    if normalized {
        let ocr: String = result.components.iter().map(|c| normalize(&c.ocr_text)).collect();
        let gt: String = result.components.iter().map(|c| normalize(&c.gt_text)).collect();
        (ocr, gt)
    } else {
        let ocr: Vec<&str> = result.components.iter().map(|c| c.ocr_text.as_str()).collect();
        let gt: Vec<&str> = result.components.iter().map(|c| c.gt_text.as_str()).collect();
        (ocr.join(" "), gt.join(" "))
    }
}

/// CER of a whole document: component texts concatenated in sequence order.
pub fn document_cer(result: &AlignmentResult) -> Result<f64> {
    document_cer_with(result, true)
}

pub fn document_cer_with(result: &AlignmentResult, normalized: bool) -> Result<f64> {
    let (ocr, gt) = document_sequences(result, normalized);
    cer(&ocr, &gt)
}

/// Corpus-level CER: total edits over total GT characters.
pub fn pooled_cer(results: &[AlignmentResult], normalized: bool) -> Result<f64> {
    let (mut edits, mut chars) = (0usize, 0usize);
    for r in results {
        let (ocr, gt) = document_sequences(r, normalized);
        edits += levenshtein(&ocr, &gt);
        chars += gt.chars().count();
    }
    if chars == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(edits as f64 / chars as f64)
}

pub fn ber(results: &[AlignmentResult]) -> Result<f64> {
    let total: usize = results.iter().map(|r| r.components.len()).sum();
    if total == 0 {
        return Err(Error::EmptyInput("box error rate"));
    }
    let errors = results
        .iter()
        .flat_map(|r| &r.components)
        .filter(|c| c.is_error)
        .count();
    Ok(errors as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

fn bin_index(confidence: f64, num_bins: usize) -> usize {
    // [k/m, (k+1)/m), with 1.0 folded into the last bin.
    ((confidence * num_bins as f64).floor() as usize).min(num_bins - 1)
}

pub fn calibration_bins(pairs: &[(f64, bool)], num_bins: usize) -> Result<Vec<CalibrationBin>> {
    if num_bins == 0 {
        return Err(Error::invalid("number of calibration bins must be >= 1"));
    }
    let mut sums = vec![(0usize, 0.0f64, 0usize); num_bins];
    for &(c, correct) in pairs {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid(format!("confidence {c} outside [0,1]")));
        }
        let s = &mut sums[bin_index(c, num_bins)];
        s.0 += 1;
        s.1 += c;
        s.2 += usize::from(correct);
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, conf_sum, hits))| {
            let (mean_confidence, accuracy) = if count == 0 {
                (0.0, 0.0)
            } else {
                (conf_sum / count as f64, hits as f64 / count as f64)
            };
            CalibrationBin {
                lower: i as f64 / num_bins as f64,
                upper: (i + 1) as f64 / num_bins as f64,
                count,
                mean_confidence,
                accuracy,
            }
        })
        .collect())
}

/// Expected calibration error over `(confidence, correct)` pairs.
pub fn ece(pairs: &[(f64, bool)], num_bins: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("expected calibration error"));
    }
    let n = pairs.len() as f64;
    Ok(calibration_bins(pairs, num_bins)?
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * (b.accuracy - b.mean_confidence).abs())
        .sum())
}

/// Calibration pairs of every component carrying a confidence.
pub fn calibration_pairs(results: &[AlignmentResult]) -> Vec<(f64, bool)> {
    results
        .iter()
        .flat_map(|r| &r.components)
        .filter_map(|c| c.confidence.map(|p| (p, !c.is_error)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Micro precision / recall / F1 with "error" as the positive class.
pub fn micro_f1(predictions: &[bool], labels: &[bool]) -> Result<PrfScore> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrfScore {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub cer: f64,
    pub ber: f64,
    pub ece: f64,
    pub avg_components: f64,
    pub avg_unmatched_ocr: f64,
    pub num_documents: usize,
}

pub fn dataset_stats(
    results: &[AlignmentResult],
    pairs: &[(f64, bool)],
    opts: &MetricOptions,
) -> Result<DatasetStats> {
    if results.is_empty() {
        return Err(Error::EmptyInput("dataset statistics"));
    }
    let n = results.len() as f64;
    let cer = if opts.pooled_cer {
        pooled_cer(results, opts.normalize)?
    } else {
        let mut total = 0.0;
        for r in results {
            total += document_cer_with(r, opts.normalize)?;
        }
        total / n
    };
    Ok(DatasetStats {
        cer,
        ber: ber(results)?,
        ece: ece(pairs, opts.num_bins)?,
        avg_components: results.iter().map(|r| r.components.len()).sum::<usize>() as f64 / n,
        avg_unmatched_ocr: results.iter().map(|r| r.unmatched_ocr_count).sum::<usize>() as f64 / n,
        num_documents: results.len(),
    })
}
