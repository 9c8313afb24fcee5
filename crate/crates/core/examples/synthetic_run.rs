//! Trains detectors on the calibrated synthetic dataset and prints test F1.
//!
//! Usage: synthetic_run [lr] [repeats] [kinds...] where kinds are
//! `baseline`, `plain`, `confbert` or an alpha value.

use std::time::Instant;

use ocrconf::detector::{run_repeats, DetectorKind, ExperimentConfig, PreparedSplit, TrainConfig};
use ocrconf::synthetic::{generate_dataset, SyntheticConfig};

fn main() -> ocrconf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lr: f64 = args.first().map_or(5e-5, |s| s.parse().unwrap());
    let repeats: usize = args.get(1).map_or(3, |s| s.parse().unwrap());
    let kinds: Vec<DetectorKind> = args
        .iter()
        .skip(2)
        .map(|k| match k.as_str() {
            "baseline" => DetectorKind::Baseline,
            "plain" => DetectorKind::Plain,
            "confbert" => DetectorKind::ConfBert { alpha: None },
            a => DetectorKind::ConfBert { alpha: Some(a.parse().unwrap()) },
        })
        .collect();
    let env = |k: &str| std::env::var(k).ok().map(|v| v.parse::<f64>().unwrap());
    let mut syn = SyntheticConfig::default();
    if let Some(g) = env("GARBLED") {
        syn.garbled_fraction = g;
    }
    if let Some(n) = env("TRAIN_DOCS") {
        syn.train_docs = n as usize;
    }
    let ds = generate_dataset(&syn)?;
    let mut cfg = ExperimentConfig::new(TrainConfig {
        learning_rate: lr,
        repeats,
        batch_size: env("BATCH").map_or(8, |b| b as usize),
        ..TrainConfig::default()
    });
    if let Some(s) = env("EMB_STD") {
        cfg.encoder.embedding_init_std = s;
    }
    let data = PreparedSplit::new(&ds.split, cfg.max_vocab, cfg.encoder.max_seq_len)?;
    cfg.encoder.vocab_size = data.vocab.len();
    let mut samples = Vec::new();
    for kind in kinds {
        let t = Instant::now();
        let runs = run_repeats(kind, &data, &cfg)?;
        let f1: Vec<f64> = runs.iter().map(|r| r.test.f1).collect();
        let mean = f1.iter().sum::<f64>() / f1.len() as f64;
        let epochs: Vec<String> = runs
            .iter()
            .map(|r| r.finetune.as_ref().map_or("-".into(), |f| format!("{}/{}", f.best_epoch, f.epochs_run)))
            .collect();
        let alpha: Vec<String> = runs.iter().filter_map(|r| r.final_alpha).map(|a| format!("{a:.3}")).collect();
        println!(
            "{:<20} mean {:.4} f1 {:?} epochs {:?} alpha {:?} ({:.1}s)",
            kind.label(),
            mean,
            f1.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            epochs,
            alpha,
            t.elapsed().as_secs_f64()
        );
        samples.push(f1);
    }
    if samples.len() >= 2 {
        let v = ocrconf::stats::aggregate_runs(&samples[1], &samples[0], 0.05)?;
        println!("KS second vs first: D {:.2} p {:.4}", v.ks.statistic, v.ks.p_value);
    }
    Ok(())
}
