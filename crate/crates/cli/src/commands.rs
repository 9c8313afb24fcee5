use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use ocrconf::alignment::align_document;
use ocrconf::detector::checkpoint::save_checkpoint;
use ocrconf::detector::sweep::{alpha_grid, summarize_sweep, SweepReport};
use ocrconf::detector::{
    parallel_map, train_detector, DetectorKind, EncoderConfig, ExperimentConfig, PreparedSplit, PretrainConfig,
    RunResult, TrainConfig, Vocab,
};
use ocrconf::io::{
    assemble_documents, emit_aligned, load_aligned, load_gt, load_ocr, split_dataset, write_corpus,
    AlignedDatasetFile, AlignedHeader, CorpusHeader, CorpusSequence, GtFormat, SplitSpec, TOOLKIT_VERSION,
};
use ocrconf::metrics::{calibration_pairs, dataset_stats, MetricOptions};
use ocrconf::noise_sim::{NoiseSimulator, RngSeed};
use ocrconf::stats::{aggregate_runs, std_dev, SignificanceVerdict};
use ocrconf::synthetic::{generate_dataset, SyntheticConfig};

use crate::report::{pct, write_text, Records, Table};
use crate::{
    AlignArgs, Command, CommonTrainArgs, MetricsArgs, ModelTag, NoisegenArgs, SweepArgs, SynthArgs, TrainArgs,
};

/// Invalid invocation detected after argument parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for bad input or invocation, 1 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<ocrconf::Error>() {
            use ocrconf::Error::*;
            return match e {
                Io { .. }
                | Parse { .. }
                | Validation { .. }
                | SchemaVersion { .. }
                | Json(_)
                | EmptyInput(_)
                | EmptyGroundTruth
                | InvalidArgument(_)
                | Checkpoint(_) => 2,
                LengthMismatch { .. } | ZeroVariance(_) => 1,
            };
        }
    }
    1
}

/// Error chain joined by `: `, skipping causes already quoted by the
/// message above them.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

pub fn run(cmd: &Command) -> Result<()> {
    let config = serde_json::to_value(cmd)?;
    match cmd {
        Command::Align(a) => align(a, &config),
        Command::Metrics(a) => metrics(a, &config),
        Command::Noisegen(a) => noisegen(a, &config),
        Command::Train(a) => train(a, &config),
        Command::Sweep(a) => sweep(a, &config),
        Command::Synth(a) => synth(a, &config),
    }
}

fn align(args: &AlignArgs, config: &Value) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(usage(format!("threshold {} outside [0,1]", args.threshold)));
    }
    let format: GtFormat = args.gt_format.parse()?;
    let gt = load_gt(&args.gt, format)?;
    let ocr = load_ocr(&args.ocr)?;
    let (docs, orphans) = assemble_documents(gt, ocr);
    for id in &orphans {
        log::warn!("OCR document {id} has no ground truth and is skipped");
    }
    let results: Vec<_> = docs.iter().map(|d| align_document(d, args.threshold)).collect();
    let file = AlignedDatasetFile {
        header: AlignedHeader::new(
            args.threshold,
            vec![args.ocr.display().to_string(), args.gt.display().to_string()],
            config.clone(),
        ),
        documents: results,
    };
    emit_aligned(&args.out, &file)?;
    let unmatched_gt: usize = file
        .documents
        .iter()
        .flat_map(|d| &d.components)
        .filter(|c| c.is_unmatched_gt)
        .count();
    let unmatched_ocr: usize = file.documents.iter().map(|d| d.unmatched_ocr_count).sum();
    println!(
        "aligned {} documents: {} components, {} unmatched GT components, {} unmatched OCR boxes, {} OCR-only documents",
        file.documents.len(),
        file.num_components(),
        unmatched_gt,
        unmatched_ocr,
        orphans.len()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn metrics(args: &MetricsArgs, config: &Value) -> Result<()> {
    if args.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let data = load_aligned(&args.aligned)?;
    let opts = MetricOptions {
        num_bins: args.bins,
        normalize: !args.no_normalize,
        pooled_cer: args.pooled,
    };
    let pairs = calibration_pairs(&data.documents);
    let stats = dataset_stats(&data.documents, &pairs, &opts)?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| file_label(&args.aligned));
    let mut table = Table::new(&["Dataset", "Docs", "CER (%)", "BER (%)", "ECE (%)", "AC", "AUB"]);
    table.row(vec![
        name.clone(),
        stats.num_documents.to_string(),
        pct(stats.cer),
        pct(stats.ber),
        pct(stats.ece),
        format!("{:.2}", stats.avg_components),
        format!("{:.2}", stats.avg_unmatched_ocr),
    ]);
    print!("{}", table.render());
    if let Some(out) = &args.out {
        #[derive(Serialize)]
        struct Row<'a> {
            dataset: &'a str,
            #[serde(flatten)]
            stats: &'a ocrconf::metrics::DatasetStats,
            calibrated_components: usize,
        }
        let mut rec = Records::new(config);
        rec.push(
            "metrics",
            &Row {
                dataset: &name,
                stats: &stats,
                calibrated_components: pairs.len(),
            },
        )?;
        rec.write(out)?;
    }
    Ok(())
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn noisegen(args: &NoisegenArgs, config: &Value) -> Result<()> {
    let bytes = std::fs::read(&args.corpus).map_err(|e| usage(format!("cannot read {}: {e}", args.corpus.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(usage(format!("corpus {} is empty", args.corpus.display())));
    }
    let vocab = Vocab::build(lines.iter().copied(), args.max_vocab)?;
    let noise = NoiseSimulator::new(vocab.len() as u32, &vocab.special_ids())?;
    let mut rng = RngSeed(args.seed).rng();
    let mut sequences = Vec::with_capacity(lines.len());
    for line in &lines {
        let ids = vocab.tokenize(line);
        sequences.push(CorpusSequence::from_tokens(&noise.noise_sequence(&ids, &mut rng)?));
    }
    let tokens: usize = sequences.iter().map(|s| s.original.len()).sum();
    let noised: usize = sequences.iter().map(|s| s.noised.iter().filter(|&&n| n).count()).sum();
    let mean_conf = sequences.iter().flat_map(|s| &s.confidence).sum::<f64>() / tokens.max(1) as f64;
    let header = CorpusHeader {
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config.clone(),
        vocab: vocab.tokens().to_vec(),
    };
    write_corpus(&args.out, &header, &sequences)?;
    println!(
        "noised {} sequences, {} tokens: noise rate {:.4}, mean confidence {:.4}, vocabulary {}",
        sequences.len(),
        tokens,
        noised as f64 / tokens.max(1) as f64,
        mean_conf,
        vocab.len()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn experiment_config(c: &CommonTrainArgs) -> Result<ExperimentConfig> {
    let train = TrainConfig {
        max_epochs: c.max_epochs,
        patience: c.patience,
        learning_rate: c.lr,
        batch_size: c.batch_size,
        repeats: c.repeats,
        positive_class_weight: c.positive_class_weight,
        seed: c.seed,
        ..TrainConfig::default()
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    let mut encoder = EncoderConfig::tiny(0);
    encoder.num_layers = c.layers;
    encoder.hidden_dim = c.hidden_dim;
    encoder.num_heads = c.heads;
    encoder.ffn_dim = c.ffn_dim;
    encoder.max_seq_len = c.max_seq_len;
    encoder.embedding_init_std = c.embedding_init_std;
    let mut probe = encoder.clone();
    probe.vocab_size = 2;
    probe.validate().map_err(|e| usage(e.to_string()))?;
    Ok(ExperimentConfig {
        encoder,
        pretrain: c.pretrain.then(|| PretrainConfig {
            steps: c.pretrain_steps,
            learning_rate: c.lr,
            ..PretrainConfig::default()
        }),
        ..ExperimentConfig::new(train)
    })
}

fn prepare(c: &CommonTrainArgs, cfg: &ExperimentConfig) -> Result<PreparedSplit> {
    let data = load_aligned(&c.aligned)?;
    let spec = match &c.split {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<SplitSpec>(&text).with_context(|| format!("parsing split {}", path.display()))?
        }
        None => SplitSpec::Fractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: c.split_seed,
        },
    };
    let split = split_dataset(&data.documents, &spec)?;
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    log::info!(
        "split: {} train, {} validation, {} test documents",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(PreparedSplit::new(&split, cfg.max_vocab, cfg.encoder.max_seq_len)?)
}

fn detector_kind(model: ModelTag, alpha: Option<f64>) -> Result<DetectorKind> {
    if let Some(a) = alpha {
        if model != ModelTag::Confbert {
            return Err(usage("--alpha only applies to --model confbert"));
        }
        if !(0.0..=1.0).contains(&a) {
            return Err(usage(format!("alpha {a} outside [0,1]")));
        }
    }
    Ok(match model {
        ModelTag::Baseline => DetectorKind::Baseline,
        ModelTag::Plain => DetectorKind::Plain,
        ModelTag::Confbert => DetectorKind::ConfBert { alpha },
    })
}

#[derive(Debug, Serialize)]
struct Summary {
    detector: String,
    repeats: usize,
    mean_f1: f64,
    std_f1: f64,
    mean_precision: f64,
    mean_recall: f64,
    significance: Option<SignificanceVerdict>,
    reference: Option<String>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn read_reference(path: &Path) -> Result<(String, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut scores = Vec::new();
    let mut name = file_label(path);
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if v["kind"] == "repeat" {
            if let Some(d) = v["detector"].as_str() {
                name = d.to_string();
            }
            match v["test"]["f1"].as_f64() {
                Some(f) => scores.push(f),
                None => return Err(usage(format!("{}:{}: repeat without test F1", path.display(), i + 1))),
            }
        }
    }
    if scores.is_empty() {
        return Err(usage(format!("{} holds no repeat records", path.display())));
    }
    Ok((name, scores))
}

fn train(args: &TrainArgs, config: &Value) -> Result<()> {
    let kind = detector_kind(args.model, args.alpha)?;
    let cfg = experiment_config(&args.common)?;
    let reference = args.reference.as_deref().map(read_reference).transpose()?;
    let data = prepare(&args.common, &cfg)?;
    let seeds: Vec<u64> = (0..cfg.train.repeats as u64).map(|i| cfg.train.seed + i).collect();
    let runs: Vec<RunResult> = parallel_map(&seeds, args.common.jobs, |&seed| {
        let trained = train_detector(kind, &data, &cfg, seed)?;
        if let (Some(dir), Some((model, rng))) = (&args.checkpoint_dir, &trained.model) {
            save_checkpoint(&dir.join(format!("repeat-{seed}.ckpt")), model, Some(&data.vocab), rng)?;
        }
        Ok(trained.result)
    })?;

    let f1: Vec<f64> = runs.iter().map(|r| r.test.f1).collect();
    let significance = match &reference {
        Some((_, ref_f1)) => Some(aggregate_runs(&f1, ref_f1, 0.05)?),
        None => None,
    };
    let summary = Summary {
        detector: kind.label(),
        repeats: runs.len(),
        mean_f1: mean(&f1),
        std_f1: std_dev(&f1),
        mean_precision: mean(&runs.iter().map(|r| r.test.precision).collect::<Vec<_>>()),
        mean_recall: mean(&runs.iter().map(|r| r.test.recall).collect::<Vec<_>>()),
        significance,
        reference: reference.as_ref().map(|(n, _)| n.clone()),
    };

    let mut per = Table::new(&["Seed", "Test F1", "P", "R", "Val F1", "Epochs", "Alpha"]);
    for r in &runs {
        per.row(vec![
            r.seed.to_string(),
            pct(r.test.f1),
            pct(r.test.precision),
            pct(r.test.recall),
            pct(r.val_f1),
            r.finetune
                .as_ref()
                .map_or("-".into(), |f| format!("{}/{}", f.best_epoch, f.epochs_run)),
            r.final_alpha.map_or("-".into(), |a| format!("{a:.3}")),
        ]);
    }
    print!("{}", per.render());
    println!();
    let mut row = Table::new(&["Model", "F1 (%)", "Std", "P (%)", "R (%)", "KS p", "Significant"]);
    row.row(vec![
        summary.detector.clone(),
        pct(summary.mean_f1),
        pct(summary.std_f1),
        pct(summary.mean_precision),
        pct(summary.mean_recall),
        summary
            .significance
            .as_ref()
            .map_or("-".into(), |s| format!("{:.4}", s.ks.p_value)),
        summary
            .significance
            .as_ref()
            .map_or("-".into(), |s| if s.significant { "yes".into() } else { "no".into() }),
    ]);
    print!("{}", row.render());
    if let Some(r) = &summary.reference {
        println!("significance against {r}");
    }

    if let Some(dir) = &args.common.out {
        let mut rec = Records::new(config);
        for r in &runs {
            rec.push("repeat", r)?;
        }
        rec.push("summary", &summary)?;
        let path = dir.join(format!("train_{}.jsonl", tag_file(&kind)));
        rec.write(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn tag_file(kind: &DetectorKind) -> String {
    match kind {
        DetectorKind::ConfBert { alpha: Some(a) } => format!("confbert_alpha{a}"),
        k => k.label(),
    }
}

fn sweep(args: &SweepArgs, config: &Value) -> Result<()> {
    let grid = alpha_grid(args.grid_step).map_err(|e| usage(e.to_string()))?;
    let cfg = experiment_config(&args.common)?;
    let data = prepare(&args.common, &cfg)?;
    let seeds: Vec<u64> = (0..cfg.train.repeats as u64).map(|i| cfg.train.seed + i).collect();
    let jobs: Vec<(f64, u64)> = grid.iter().flat_map(|&a| seeds.iter().map(move |&s| (a, s))).collect();
    let scores = parallel_map(&jobs, args.common.jobs, |&(alpha, seed)| {
        let kind = DetectorKind::ConfBert { alpha: Some(alpha) };
        Ok(train_detector(kind, &data, &cfg, seed)?.result.test.f1)
    })?;
    let samples: Vec<(f64, Vec<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, scores[i * seeds.len()..(i + 1) * seeds.len()].to_vec()))
        .collect();
    let report = summarize_sweep(samples)?;
    print_sweep(&report);

    if let Some(dir) = &args.common.out {
        let mut rec = Records::new(config);
        for row in &report.rows {
            rec.push("sweep_point", row)?;
        }
        #[derive(Serialize)]
        struct Corr<'a> {
            window: &'a Option<ocrconf::stats::PearsonResult>,
            full: &'a Option<ocrconf::stats::PearsonResult>,
        }
        rec.push(
            "correlation",
            &Corr {
                window: &report.pearson_window,
                full: &report.pearson_full,
            },
        )?;
        let jsonl = dir.join("sweep.jsonl");
        rec.write(&jsonl)?;
        let tsv = dir.join("sweep.tsv");
        write_text(&tsv, &sweep_tsv(&report, config))?;
        println!("wrote {} and {}", jsonl.display(), tsv.display());
    }
    Ok(())
}

fn print_sweep(report: &SweepReport) {
    let mut t = Table::new(&["Alpha", "F1 (%)", "Std", "Rel. improvement (%)", "Note"]);
    for r in &report.rows {
        t.row(vec![
            format!("{:.2}", r.alpha),
            pct(r.mean_f1),
            pct(r.std_f1),
            pct(r.improvement),
            if r.absolute_fallback { "absolute".into() } else { String::new() },
        ]);
    }
    print!("{}", t.render());
    let show = |label: &str, p: &Option<ocrconf::stats::PearsonResult>| match p {
        Some(p) => println!("Pearson {label}: r = {:.4}, p = {:.4}", p.r, p.p_value),
        None => println!("Pearson {label}: undefined"),
    };
    show("alpha in [0.1, 0.8]", &report.pearson_window);
    show("all alphas", &report.pearson_full);
}

/// Tab-separated plot data preceded by `#` provenance lines.
fn sweep_tsv(report: &SweepReport, config: &Value) -> String {
    let mut s = format!("# toolkit_version {TOOLKIT_VERSION}\n# config {config}\n");
    s.push_str("alpha\tmean_f1\tstd_f1\trelative_improvement\tabsolute_fallback\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.alpha, r.mean_f1, r.std_f1, r.improvement, r.absolute_fallback
        ));
    }
    s
}

fn synth(args: &SynthArgs, config: &Value) -> Result<()> {
    if args.train_docs == 0 || args.val_docs == 0 || args.test_docs == 0 {
        return Err(usage("every split needs at least one document"));
    }
    let cfg = SyntheticConfig {
        train_docs: args.train_docs,
        val_docs: args.val_docs,
        test_docs: args.test_docs,
        boxes_per_doc: args.boxes_per_doc,
        garbled_fraction: args.garbled_fraction,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let ds = generate_dataset(&cfg).map_err(|e| usage(e.to_string()))?;
    let ids = |docs: &[ocrconf::alignment::AlignmentResult]| docs.iter().map(|d| d.doc_id.clone()).collect();
    let spec = SplitSpec::Explicit {
        train: ids(&ds.split.train),
        val: ids(&ds.split.val),
        test: ids(&ds.split.test),
    };
    let documents: Vec<_> = ds
        .split
        .train
        .into_iter()
        .chain(ds.split.val)
        .chain(ds.split.test)
        .collect();
    let file = AlignedDatasetFile {
        header: AlignedHeader::new(ocrconf::alignment::DEFAULT_THRESHOLD, vec!["synthetic".into()], config.clone()),
        documents,
    };
    emit_aligned(&args.out, &file)?;
    println!("wrote {} documents to {}", file.documents.len(), args.out.display());
    if let Some(path) = &args.split_out {
        write_text(path, &(serde_json::to_string_pretty(&spec)? + "\n"))?;
        println!("wrote split to {}", path.display());
    }
    Ok(())
}

