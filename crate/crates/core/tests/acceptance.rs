//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are
//! always visible.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use ocrconf::alignment::{align_document, build_match_graph, normalize, AlignmentResult, MatchDirection};
use ocrconf::detector::encoding::EncodedWindow;
use ocrconf::detector::model::{ConfidenceMode, DetectorModel, EncoderConfig};
use ocrconf::detector::params::ParamStore;
use ocrconf::detector::sweep::{alpha_grid, summarize_sweep, CORRELATION_WINDOW};
use ocrconf::detector::train::{finetune_loss, pretrain_loss, run_protocol, LossPart, PretrainExample, TrainConfig};
use ocrconf::detector::{run_detector, run_repeats, DetectorKind, ExperimentConfig, PreparedSplit};
use ocrconf::geometry::{BBox, Document, GtBox, OcrBox};
use ocrconf::io::{write_corpus, CorpusHeader, CorpusSequence};
use ocrconf::metrics::{calibration_bins, ece, levenshtein, DEFAULT_BINS};
use ocrconf::noise_sim::{noise_sequence, RngSeed};
use ocrconf::stats::{aggregate_runs, ks_two_sample, pearson};
use ocrconf::synthetic::{generate_dataset, SyntheticConfig};
use rand::seq::SliceRandom;
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn brute_edit(a: &[u8], b: &[u8]) -> usize {
    match (a.split_first(), b.split_first()) {
        (None, _) => b.len(),
        (_, None) => a.len(),
        (Some((ha, ta)), Some((hb, tb))) => {
            let sub = brute_edit(ta, tb) + usize::from(ha != hb);
            sub.min(brute_edit(ta, b) + 1).min(brute_edit(a, tb) + 1)
        }
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = RngSeed(1).rng();
    let word = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<u8> {
        let n = rng.gen_range(0..=8);
        (0..n).map(|_| b"abcd"[rng.gen_range(0..4)]).collect()
    };
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let a = word(&mut rng);
        let b = word(&mut rng);
        let fast = levenshtein(std::str::from_utf8(&a).unwrap(), std::str::from_utf8(&b).unwrap());
        if fast != brute_edit(&a, &b) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("10000 pairs, {mismatches} mismatches, {:.2}s (limit 30s)", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 2

fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn ocr(id: &str, b: BBox, text: &str, confidence: f64) -> OcrBox {
    OcrBox {
        id: id.into(),
        bbox: b,
        text: text.into(),
        confidence,
    }
}

fn gt(id: &str, b: BBox, text: &str, order_index: usize) -> GtBox {
    GtBox {
        id: id.into(),
        bbox: b,
        text: text.into(),
        order_index,
    }
}

/// A two-line receipt: an exact match, one OCR box spanning two GT words,
/// a misread word whose box grazes its neighbour below threshold, one GT
/// word split over two OCR boxes, a GT word the OCR missed and a stray
/// OCR box in the margin.
fn figure_fixture() -> Document {
    let mut doc = Document::new("fixture");
    doc.gt_boxes = vec![
        gt("g0", bbox(0.0, 0.0, 70.0, 10.0), "Invoice", 0),
        gt("g1", bbox(80.0, 0.0, 110.0, 10.0), "No.", 1),
        gt("g2", bbox(120.0, 0.0, 170.0, 10.0), "12345", 2),
        gt("g3", bbox(0.0, 20.0, 60.0, 30.0), "Total:", 3),
        gt("g4", bbox(70.0, 20.0, 120.0, 30.0), "42.00", 4),
        gt("g5", bbox(130.0, 20.0, 160.0, 30.0), "EUR", 5),
    ];
    doc.ocr_boxes = vec![
        ocr("o0", bbox(0.0, 0.0, 70.0, 10.0), "Invoice", 0.9),
        ocr("o1", bbox(80.0, 0.0, 170.0, 10.0), "No.12345", 0.6),
        // Overlaps g4 by 20 units: 20/720 of itself, 20/500 of g4.
        ocr("o2", bbox(0.0, 20.0, 72.0, 30.0), "Tota1:", 0.4),
        ocr("o4", bbox(100.0, 20.0, 120.0, 30.0), ".00", 0.7),
        ocr("o3", bbox(70.0, 20.0, 100.0, 30.0), "42", 0.8),
        ocr("o5", bbox(200.0, 50.0, 240.0, 70.0), "stamp", 0.3),
    ];
    doc
}

type Row = (Vec<&'static str>, Vec<&'static str>, &'static str, Option<f64>, bool, bool);

/// Hand trace of `figure_fixture` at threshold 0.10, in GT reading order:
/// (gt ids, ocr ids, normalized ocr text, confidence, is_error, unmatched).
fn figure_expected() -> Vec<Row> {
    vec![
        (vec!["g0"], vec!["o0"], "invoice", Some(0.9), false, false),
        (vec!["g1", "g2"], vec!["o1"], "no.12345", Some(0.6), false, false),
        (vec!["g3"], vec!["o2"], "tota1:", Some(0.4), true, false),
        (vec!["g4"], vec!["o3", "o4"], "42.00", Some(0.75), false, false),
        (vec!["g5"], vec![], "", None, true, true),
    ]
}

fn matches_expected(result: &AlignmentResult) -> bool {
    let expected = figure_expected();
    let mut ok = result.unmatched_ocr_count == 1 && result.components.len() == expected.len();
    for (c, (g, o, text, conf, err, unmatched)) in result.components.iter().zip(&expected) {
        let mut ocr_ids: Vec<&str> = c.ocr_ids.iter().map(String::as_str).collect();
        ocr_ids.sort_unstable();
        let conf_ok = match (c.confidence, conf) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
            (None, None) => true,
            _ => false,
        };
        ok &= c.gt_ids == *g
            && ocr_ids == *o
            && normalize(&c.ocr_text) == *text
            && conf_ok
            && c.is_error == *err
            && c.is_unmatched_gt == *unmatched;
    }
    ok
}

fn random_layout(rng: &mut rand_chacha::ChaCha8Rng) -> Document {
    let mut doc = Document::new("layout");
    let b = |rng: &mut rand_chacha::ChaCha8Rng| {
        let (x, y) = (rng.gen_range(0.0..90.0), rng.gen_range(0.0..90.0));
        bbox(x, y, x + rng.gen_range(1.0..30.0), y + rng.gen_range(1.0..15.0))
    };
    for i in 0..rng.gen_range(1..=8) {
        let bb = b(rng);
        doc.gt_boxes.push(gt(&format!("g{i}"), bb, "w", i));
    }
    for i in 0..rng.gen_range(1..=8) {
        let bb = b(rng);
        let c = rng.gen_range(0.0..=1.0);
        doc.ocr_boxes.push(ocr(&format!("o{i}"), bb, "w", c));
    }
    doc
}

/// Component index of every box id.
fn membership(result: &AlignmentResult) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for (k, c) in result.components.iter().enumerate() {
        for id in c.gt_ids.iter().chain(&c.ocr_ids) {
            m.insert(id.clone(), k);
        }
    }
    m
}

fn monotone(doc: &Document, t1: f64, t2: f64) -> bool {
    let edges = |t| -> BTreeSet<(String, String)> {
        build_match_graph(doc, t).into_iter().map(|e| (e.ocr_id, e.gt_id)).collect()
    };
    if !edges(t2).is_subset(&edges(t1)) {
        return false;
    }
    let coarse = membership(&align_document(doc, t1));
    align_document(doc, t2).components.iter().all(|c| {
        let homes: BTreeSet<Option<&usize>> = c.gt_ids.iter().chain(&c.ocr_ids).map(|id| coarse.get(id)).collect();
        homes.len() == 1 && !homes.contains(&None)
    })
}

fn criterion_2() -> Verdict {
    let mut doc = Document::new("period");
    doc.ocr_boxes = vec![ocr("o", bbox(0.0, 0.0, 44.0, 10.0), "text.", 0.8)];
    doc.gt_boxes = vec![
        gt("text", bbox(0.0, 0.0, 40.0, 10.0), "text", 0),
        gt("dot", bbox(40.0, 0.0, 44.0, 10.0), ".", 1),
    ];
    let edges = build_match_graph(&doc, 0.10);
    let dirs: Vec<(&str, MatchDirection)> = edges.iter().map(|e| (e.gt_id.as_str(), e.direction)).collect();
    let period = align_document(&doc, 0.10);
    let period_ok = dirs.contains(&("text", MatchDirection::Both))
        && dirs.contains(&("dot", MatchDirection::GtToOcr))
        && period.components.len() == 1
        && period.components[0].gt_text.replace(' ', "") == "text."
        && !period.components[0].is_error;

    let fixture = figure_fixture();
    let mut fixture_ok = matches_expected(&align_document(&fixture, 0.10));
    let mut rng = RngSeed(2).rng();
    for _ in 0..5 {
        let mut shuffled = fixture.clone();
        shuffled.ocr_boxes.shuffle(&mut rng);
        shuffled.gt_boxes.shuffle(&mut rng);
        fixture_ok &= matches_expected(&align_document(&shuffled, 0.10));
    }
    // At threshold 0 the grazing overlap joins "Total:" with "42.00".
    let zero = align_document(&fixture, 0.0);
    fixture_ok &= zero.components.iter().any(|c| c.gt_ids == ["g3", "g4"]);

    let mut failures = 0;
    for _ in 0..1000 {
        let doc = random_layout(&mut rng);
        let a: f64 = rng.gen_range(0.0..1.0);
        let b: f64 = rng.gen_range(0.0..1.0);
        if !monotone(&doc, a.min(b), a.max(b)) {
            failures += 1;
        }
    }
    verdict(
        period_ok && fixture_ok && failures == 0,
        format!("period merge {period_ok}, fixture partition {fixture_ok}, monotonicity failures {failures}/1000"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Verdict {
    let two_bin = ece(&[(0.95, true), (0.95, true), (0.65, true), (0.65, false)], DEFAULT_BINS).unwrap();
    let two_bin_ok = (two_bin - 0.10).abs() <= 1e-12;

    // Bin k holds 20 pairs at confidence (2k+1)/20 with 2k+1 of them correct.
    let mut exact = Vec::new();
    for k in 0..10 {
        let hits = 2 * k + 1;
        for j in 0..20 {
            exact.push((hits as f64 / 20.0, j < hits));
        }
    }
    let exact_ece = ece(&exact, DEFAULT_BINS).unwrap();
    let mut rng = RngSeed(3).rng();
    let sampled: Vec<(f64, bool)> = (0..200_000)
        .map(|_| {
            let c: f64 = rng.gen();
            (c, rng.gen::<f64>() < c)
        })
        .collect();
    let sampled_ece = ece(&sampled, DEFAULT_BINS).unwrap();
    let calibrated_ok = exact_ece <= 1e-12 && sampled_ece < 0.01;

    let bins = calibration_bins(&[(0.5, true)], DEFAULT_BINS).unwrap();
    let widths_ok = DEFAULT_BINS == 10
        && bins.iter().all(|b| (b.upper - b.lower - 0.1).abs() < 1e-12)
        && (0..=10).all(|k| {
            let c = k as f64 / 10.0;
            let bins = calibration_bins(&[(c, true)], DEFAULT_BINS).unwrap();
            bins.iter().position(|b| b.count == 1) == Some(k.min(9))
        });
    verdict(
        two_bin_ok && calibrated_ok && widths_ok,
        format!(
            "two-bin {two_bin:.15}, calibrated {exact_ece:.1e} / sampled {sampled_ece:.4}, 10 bins of 0.1 {widths_ok}"
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Kolmogorov distribution tail `P(K > x)`.
fn kolmogorov_tail(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let s: f64 = (1..200)
        .map(|k| {
            let k = k as f64;
            (if k as u64 % 2 == 1 { 2.0 } else { -2.0 }) * (-2.0 * k * k * x * x).exp()
        })
        .sum();
    s.clamp(0.0, 1.0)
}

fn noised_corpus(seed: u64, sequences: usize, len: usize, vocab: u32) -> Vec<CorpusSequence> {
    let mut rng = RngSeed(seed).rng();
    (0..sequences)
        .map(|_| {
            let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..vocab)).collect();
            CorpusSequence::from_tokens(&noise_sequence(&ids, vocab, &mut rng).unwrap())
        })
        .collect()
}

fn corpus_bytes(seed: u64, dir: &std::path::Path) -> Vec<u8> {
    let header = CorpusHeader {
        toolkit_version: "acceptance".into(),
        config: serde_json::json!({ "seed": seed }),
        vocab: (0..50).map(|i| format!("w{i}")).collect(),
    };
    let path = dir.join(format!("corpus_{seed}.jsonl"));
    write_corpus(&path, &header, &noised_corpus(seed, 200, 30, 50)).unwrap();
    std::fs::read(path).unwrap()
}

fn criterion_4() -> Verdict {
    let corpus = noised_corpus(4, 1000, 1000, 1000);
    let n = corpus.iter().map(|s| s.original.len()).sum::<usize>();
    let noised = corpus.iter().flat_map(|s| &s.noised).filter(|&&b| b).count();
    let rate = noised as f64 / n as f64;
    let substitutions_ok = corpus
        .iter()
        .all(|s| (0..s.original.len()).all(|i| s.noised[i] == (s.original[i] != s.observed[i])));

    let mut conf: Vec<f64> = corpus.iter().flat_map(|s| s.confidence.iter().copied()).collect();
    conf.sort_by(f64::total_cmp);
    let nf = conf.len() as f64;
    let d = conf
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x.powi(4);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    let p = kolmogorov_tail(nf.sqrt() * d);

    let dir = tempfile::tempdir().unwrap();
    let first = corpus_bytes(9, dir.path());
    let again = corpus_bytes(9, dir.path());
    let other = corpus_bytes(10, dir.path());
    let reproducible = first == again && first != other;
    verdict(
        (0.198..=0.202).contains(&rate) && substitutions_ok && p > 0.001 && reproducible,
        format!("{n} tokens, rate {rate:.5}, KS vs x^4 D {d:.5} p {p:.3}, byte-identical rerun {reproducible}"),
    )
}

// ---------------------------------------------------------------- 5

fn grad_model(mode: ConfidenceMode) -> DetectorModel {
    let mut cfg = EncoderConfig::tiny(11);
    cfg.num_layers = 1;
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.ffn_dim = 16;
    cfg.max_seq_len = 6;
    if let ConfidenceMode::Fixed(a) = mode {
        cfg.alpha_init = a;
        cfg.alpha_trainable = false;
    }
    let mut m = DetectorModel::new(cfg, mode, &mut RngSeed(21).rng()).unwrap();
    let mut rng = RngSeed(22).rng();
    let (w, b) = m.error_head_ids();
    for id in [w, b] {
        for v in &mut m.params.tensors[id].data {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    m
}

fn grad_inputs() -> (EncodedWindow, PretrainExample) {
    let window = EncodedWindow {
        token_ids: vec![3, 6, 9, 4, 10, 4],
        confidences: vec![1.0, 0.2, 0.2, 1.0, 0.7, 1.0],
        spans: vec![1..3, 4..5],
        component_indices: vec![0, 1],
        labels: vec![true, false],
    };
    let example = PretrainExample {
        tokens: vec![3, 2, 7, 8, 5, 4],
        confidences: vec![1.0, 0.6, 0.3, 0.9, 0.5, 1.0],
        mlm_positions: vec![1, 4],
        mlm_targets: vec![9, 6],
        noise_positions: vec![1, 2, 3, 4],
        noise_labels: vec![true, true, false, false],
    };
    (window, example)
}

fn total_loss(m: &DetectorModel, mut grads: Option<&mut ParamStore>) -> f64 {
    let (w, ex) = grad_inputs();
    let a = finetune_loss(m, &[&w], 1.0, grads.as_deref_mut());
    a + pretrain_loss(m, &[ex], LossPart::Both, grads).total
}

/// Worst per-tensor relative error against central differences, skipping
/// tensors whose true gradient is identically zero.
fn worst_gradient_error(mode: ConfidenceMode) -> (f64, bool) {
    const H: f64 = 1e-3;
    let mut m = grad_model(mode);
    let mut grads = m.params.zeros_like();
    total_loss(&m, Some(&mut grads));
    let mut worst: f64 = 0.0;
    let mut saw_alpha = false;
    for t in 0..m.params.tensors.len() {
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..m.params.tensors[t].data.len() {
            let orig = m.params.tensors[t].data[i];
            m.params.tensors[t].data[i] = orig + H;
            let up = total_loss(&m, None);
            m.params.tensors[t].data[i] = orig - H;
            let down = total_loss(&m, None);
            m.params.tensors[t].data[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.tensors[t].data[i];
            diff += (numeric - analytic).powi(2);
            norm += numeric.abs().max(analytic.abs()).powi(2);
        }
        if m.params.tensors[t].name == "alpha.raw" {
            saw_alpha = norm.sqrt() > 1e-9;
        }
        if norm.sqrt() >= 1e-9 {
            worst = worst.max((diff / norm).sqrt());
        }
    }
    (worst, saw_alpha)
}

fn criterion_5() -> Verdict {
    let mut cfg = EncoderConfig::tiny(40);
    let plain = DetectorModel::new(cfg.clone(), ConfidenceMode::Plain, &mut RngSeed(5).rng()).unwrap();
    cfg.alpha_init = 0.0;
    cfg.alpha_trainable = false;
    let zero = DetectorModel::new(cfg, ConfidenceMode::Fixed(0.0), &mut RngSeed(5).rng()).unwrap();
    let toks = [3, 12, 17, 4, 25, 30, 4];
    let conf = [1.0, 0.15, 0.15, 1.0, 0.9, 0.4, 1.0];
    let (a, b) = (plain.forward(&toks, &conf), zero.forward(&toks, &conf));
    let pos = [1usize, 2, 4, 5];
    let bitwise = a.hidden == b.hidden
        && plain.mlm_logits(&a, &pos) == zero.mlm_logits(&b, &pos)
        && plain.noise_logits(&a, &pos) == zero.noise_logits(&b, &pos);

    let (trainable, saw_alpha) = worst_gradient_error(ConfidenceMode::Trainable);
    let (fixed, _) = worst_gradient_error(ConfidenceMode::Fixed(0.3));
    let (plain_err, _) = worst_gradient_error(ConfidenceMode::Plain);
    let grad_err = trainable.max(fixed).max(plain_err);

    let m = grad_model(ConfidenceMode::Trainable);
    let (_, ex) = grad_inputs();
    let batch = [ex];
    let joint = pretrain_loss(&m, &batch, LossPart::Both, None).total;
    let sum = pretrain_loss(&m, &batch, LossPart::Mlm, None).total + pretrain_loss(&m, &batch, LossPart::Noise, None).total;
    let additivity = (joint - sum).abs();
    verdict(
        bitwise && saw_alpha && grad_err <= 1e-4 && additivity <= 1e-8,
        format!(
            "alpha=0 bit-identical {bitwise}, worst gradient rel. error {grad_err:.2e} (alpha covered {saw_alpha}), \
             |joint - (mlm + noise)| {additivity:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- 6, 7

fn experiment() -> (PreparedSplit, ExperimentConfig) {
    let ds = generate_dataset(&SyntheticConfig::default()).unwrap();
    let cfg = ExperimentConfig::new(TrainConfig {
        learning_rate: 1e-3,
        ..TrainConfig::default()
    });
    let data = PreparedSplit::new(&ds.split, cfg.max_vocab, cfg.encoder.max_seq_len).unwrap();
    (data, cfg)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_6(data: &PreparedSplit, cfg: &ExperimentConfig) -> Verdict {
    let start = Instant::now();
    let f1 = |kind| -> Vec<f64> { run_repeats(kind, data, cfg).unwrap().iter().map(|r| r.test.f1).collect() };
    let plain = f1(DetectorKind::Plain);
    let conf = f1(DetectorKind::ConfBert { alpha: None });
    let v = aggregate_runs(&conf, &plain, 0.05).unwrap();
    let elapsed = start.elapsed();
    let (mp, mc) = (mean(&plain), mean(&conf));
    verdict(
        mc >= mp && v.ks.p_value < 0.05 && elapsed <= Duration::from_secs(20 * 60),
        format!(
            "mean test F1 confbert {mc:.4} vs plain {mp:.4} over {} seeds, KS D {:.2} p {:.5}, {:.0}s (limit 1200s)",
            plain.len(),
            v.ks.statistic,
            v.ks.p_value,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7(data: &PreparedSplit, cfg: &ExperimentConfig) -> Verdict {
    const REPEATS: u64 = 3;
    let grid = alpha_grid(0.1).unwrap();
    let samples = grid
        .iter()
        .map(|&a| {
            let kind = DetectorKind::ConfBert { alpha: Some(a) };
            let f1 = (0..REPEATS).map(|s| run_detector(kind, data, cfg, s).unwrap().test.f1).collect();
            (a, f1)
        })
        .collect();
    let report = summarize_sweep(samples).unwrap();
    let best = report.best();
    let last = report.rows.last().unwrap();
    let r = report.pearson_window.map_or(f64::NAN, |p| p.r);
    let shape = report
        .rows
        .iter()
        .map(|row| format!("{:.1}:{:+.3}", row.alpha, row.improvement))
        .collect::<Vec<_>>()
        .join(" ");
    let tail_ok = last.improvement <= 0.1 * best.improvement.max(0.0);
    verdict(
        report.rows.len() == 11 && tail_ok && r > 0.0 && best.alpha > 0.0,
        format!(
            "RI(1.0) {:+.4} vs RI max {:+.4} at alpha {:.1}, Pearson over [{}, {}] r {r:.3}; {shape}",
            last.improvement, best.improvement, best.alpha, CORRELATION_WINDOW.0, CORRELATION_WINDOW.1
        ),
    )
}

// ---------------------------------------------------------------- 8

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    pooled.iter().map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max)
}

/// Share of all equal-size relabelings of the pooled sample whose KS
/// statistic reaches the observed one.
fn permutation_oracle(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, total) = (a.len(), pooled.len());
    let observed = ks_statistic(a, b);
    let (mut hits, mut count) = (0u64, 0u64);
    let (mut left, mut right) = (Vec::with_capacity(n), Vec::with_capacity(total - n));
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != n {
            continue;
        }
        left.clear();
        right.clear();
        for (i, &v) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                left.push(v);
            } else {
                right.push(v);
            }
        }
        count += 1;
        if ks_statistic(&left, &right) >= observed - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / count as f64
}

fn criterion_8() -> Verdict {
    let mut rng = RngSeed(8).rng();
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        let trials = if n >= 9 { 2 } else { 4 };
        for t in 0..trials {
            let shift = t as f64 * 0.5;
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + shift).collect();
            let p = ks_two_sample(&a, &b).unwrap().p_value;
            worst = worst.max((p - permutation_oracle(&a, &b)).abs());
        }
    }
    let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.37 - 2.0).collect();
    let up: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -0.5 * v + 7.0).collect();
    let r_up = pearson(&x, &up).unwrap().r;
    let r_down = pearson(&x, &down).unwrap().r;
    let endpoints_ok = (r_up - 1.0).abs() <= 1e-12 && (r_down + 1.0).abs() <= 1e-12;
    verdict(
        worst <= 0.02 && endpoints_ok,
        format!("max |p - permutation p| {worst:.2e} for n = m = 1..10, Pearson r {r_up} / {r_down}"),
    )
}

// ---------------------------------------------------------------- 9

fn scripted(trace: &[f64]) -> (ocrconf::detector::train::ProtocolOutcome, Vec<usize>) {
    let cfg = TrainConfig::default();
    let mut saved = Vec::new();
    let out = run_protocol(cfg.max_epochs, cfg.patience, |e| Ok(trace[e - 1]), |e| saved.push(e)).unwrap();
    (out, saved)
}

fn criterion_9() -> Verdict {
    let cfg = TrainConfig::default();
    let defaults_ok = cfg.max_epochs == 16 && cfg.patience == 5;
    let mut plateau = vec![0.5];
    plateau.extend([0.6; 6]);
    plateau.extend([0.9; 9]);
    let (stop, stop_saves) = scripted(&plateau);
    let stop_ok = stop.epochs_run == 7 && stop.best_epoch == 2 && stop.best_score == 0.6 && stop_saves == [1, 2];
    let rising: Vec<f64> = (1..=20).map(|e| e as f64 / 20.0).collect();
    let (full, full_saves) = scripted(&rising);
    let full_ok = full.epochs_run == 16 && full.best_epoch == 16 && full_saves.len() == 16;
    verdict(
        defaults_ok && stop_ok && full_ok,
        format!(
            "max 16 / patience 5 {defaults_ok}; plateau stops after {} epochs keeping epoch {}; rising trace runs {} epochs",
            stop.epochs_run, stop.best_epoch, full.epochs_run
        ),
    )
}

fn main() {
    let total = Instant::now();
    let (data, cfg) = experiment();
    let criteria: Vec<(u32, &str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        (1, "edit distance matches brute-force oracle", Box::new(criterion_1)),
        (2, "alignment fixtures and threshold monotonicity", Box::new(criterion_2)),
        (3, "expected calibration error", Box::new(criterion_3)),
        (4, "noise simulation", Box::new(criterion_4)),
        (5, "detector mechanism", Box::new(criterion_5)),
        (6, "confidence-aware detector vs plain", Box::new(|| criterion_6(&data, &cfg))),
        (7, "alpha sweep shape", Box::new(|| criterion_7(&data, &cfg))),
        (8, "KS and Pearson statistics", Box::new(criterion_8)),
        (9, "early-stopping protocol", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {id} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of 9 passed in {:.0}s", 9 - failed, total.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
