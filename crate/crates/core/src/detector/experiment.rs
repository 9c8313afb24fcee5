//! One seeded training run of a detector on a dataset split.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::baseline::{fit_baseline, BaselineModel};
use super::encoding::EncodedWindow;
use super::model::{ConfidenceMode, DetectorModel, EncoderConfig};
use super::train::{encode_dataset, evaluate, finetune, pretrain, FinetuneOutcome, PretrainConfig, TrainConfig};
use super::vocab::{Vocab, DEFAULT_MAX_VOCAB};
use crate::alignment::AlignmentResult;
use crate::error::{Error, Result};
use crate::io::DatasetSplit;
use crate::metrics::{micro_f1, PrfScore};
use crate::noise_sim::{NoiseSimulator, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectorKind {
    Baseline,
    Plain,
    /// `alpha: None` trains alpha; `Some(a)` pins it.
    ConfBert { alpha: Option<f64> },
}

impl DetectorKind {
    pub fn label(&self) -> String {
        match self {
            DetectorKind::Baseline => "baseline".into(),
            DetectorKind::Plain => "plain".into(),
            DetectorKind::ConfBert { alpha: None } => "confbert".into(),
            DetectorKind::ConfBert { alpha: Some(a) } => format!("confbert(alpha={a})"),
        }
    }

    fn mode(&self) -> ConfidenceMode {
        match self {
            DetectorKind::ConfBert { alpha: None } => ConfidenceMode::Trainable,
            DetectorKind::ConfBert { alpha: Some(a) } => ConfidenceMode::Fixed(*a),
            _ => ConfidenceMode::Plain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub pretrain: Option<PretrainConfig>,
    pub max_vocab: usize,
}

impl ExperimentConfig {
    pub fn new(train: TrainConfig) -> Self {
        ExperimentConfig {
            encoder: EncoderConfig::tiny(0),
            train,
            pretrain: None,
            max_vocab: DEFAULT_MAX_VOCAB,
        }
    }
}

/// Split encoded once and shared by every run on it.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub vocab: Vocab,
    pub train: Vec<EncodedWindow>,
    pub val: Vec<EncodedWindow>,
    pub test: Vec<EncodedWindow>,
    /// Clean GT token sequences from the training documents.
    pub pretrain_corpus: Vec<Vec<u32>>,
    train_docs: Vec<AlignmentResult>,
    val_docs: Vec<AlignmentResult>,
    test_docs: Vec<AlignmentResult>,
}

impl PreparedSplit {
    /// Vocabulary from training OCR and GT text; other splits only reuse it.
    pub fn new(split: &DatasetSplit, max_vocab: usize, max_seq_len: usize) -> Result<Self> {
        if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
            return Err(Error::EmptyInput("train, validation or test split"));
        }
        let texts = split
            .train
            .iter()
            .flat_map(|d| &d.components)
            .flat_map(|c| [c.ocr_text.as_str(), c.gt_text.as_str()]);
        let vocab = Vocab::build(texts, max_vocab)?;
        let pretrain_corpus = split
            .train
            .iter()
            .map(|d| {
                d.components
                    .iter()
                    .flat_map(|c| vocab.tokenize(&c.gt_text))
                    .collect::<Vec<u32>>()
            })
            .filter(|s| !s.is_empty())
            .collect();
        Ok(PreparedSplit {
            train: encode_dataset(&split.train, &vocab, max_seq_len),
            val: encode_dataset(&split.val, &vocab, max_seq_len),
            test: encode_dataset(&split.test, &vocab, max_seq_len),
            pretrain_corpus,
            vocab,
            train_docs: split.train.clone(),
            val_docs: split.val.clone(),
            test_docs: split.test.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub detector: String,
    pub seed: u64,
    pub test: PrfScore,
    pub val_f1: f64,
    pub baseline: Option<BaselineModel>,
    pub finetune: Option<FinetuneOutcome>,
    pub final_alpha: Option<f64>,
}

fn confidences_and_labels(docs: &[AlignmentResult]) -> (Vec<f64>, Vec<bool>) {
    docs.iter()
        .flat_map(|d| &d.components)
        .map(|c| (c.confidence.unwrap_or(0.0), c.is_error))
        .unzip()
}

fn run_baseline(data: &PreparedSplit, seed: u64) -> Result<RunResult> {
    // Threshold fitting only sees boxes that carry a confidence.
    let train: Vec<f64> = data
        .train_docs
        .iter()
        .flat_map(|d| &d.components)
        .filter_map(|c| c.confidence)
        .collect();
    let (vc, vl) = confidences_and_labels(&data.val_docs);
    let (model, val) = fit_baseline(&train, &vc, &vl)?;
    let (tc, tl) = confidences_and_labels(&data.test_docs);
    let test = micro_f1(&model.predict_all(&tc), &tl)?;
    Ok(RunResult {
        detector: DetectorKind::Baseline.label(),
        seed,
        test,
        val_f1: val.f1,
        baseline: Some(model),
        finetune: None,
        final_alpha: None,
    })
}

/// Builds the model for `kind` with the run's seed; initial parameters
/// are shared across kinds for the same seed.
pub fn build_model(kind: DetectorKind, data: &PreparedSplit, cfg: &ExperimentConfig, seed: u64) -> Result<DetectorModel> {
    let mut enc = cfg.encoder.clone();
    enc.vocab_size = data.vocab.len();
    if let ConfidenceMode::Fixed(a) = kind.mode() {
        enc.alpha_init = a;
        enc.alpha_trainable = false;
    }
    DetectorModel::new(enc, kind.mode(), &mut RngSeed(seed).rng())
}

/// A finished run plus, for neural detectors, the selected model and the
/// training rng state.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub result: RunResult,
    pub model: Option<(DetectorModel, ChaCha8Rng)>,
}

pub fn run_detector(kind: DetectorKind, data: &PreparedSplit, cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    train_detector(kind, data, cfg, seed).map(|t| t.result)
}

pub fn train_detector(kind: DetectorKind, data: &PreparedSplit, cfg: &ExperimentConfig, seed: u64) -> Result<TrainedRun> {
    if kind == DetectorKind::Baseline {
        return Ok(TrainedRun {
            result: run_baseline(data, seed)?,
            model: None,
        });
    }
    let mut model = build_model(kind, data, cfg, seed)?;
    let mut rng = RngSeed(seed).worker_rng(1);
    if let Some(pcfg) = &cfg.pretrain {
        let noise = NoiseSimulator::new(data.vocab.len() as u32, &data.vocab.special_ids())?;
        pretrain(&mut model, &data.pretrain_corpus, &noise, pcfg, &mut rng)?;
    }
    let outcome = finetune(&mut model, &data.train, &data.val, &cfg.train, &mut rng)?;
    let test = evaluate(&model, &data.test)?;
    let result = RunResult {
        detector: kind.label(),
        seed,
        test,
        val_f1: outcome.best_val_f1,
        baseline: None,
        final_alpha: (kind != DetectorKind::Plain).then(|| model.alpha()),
        finetune: Some(outcome),
    };
    Ok(TrainedRun {
        result,
        model: Some((model, rng)),
    })
}

/// Repeats `run_detector` with seeds `seed, seed+1, ...`.
pub fn run_repeats(kind: DetectorKind, data: &PreparedSplit, cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    run_repeats_parallel(kind, data, cfg, 1)
}

/// As `run_repeats`, spreading repeats over `jobs` threads. Each repeat
/// depends only on its own seed, so results match the sequential run.
pub fn run_repeats_parallel(
    kind: DetectorKind,
    data: &PreparedSplit,
    cfg: &ExperimentConfig,
    jobs: usize,
) -> Result<Vec<RunResult>> {
    let seeds: Vec<u64> = (0..cfg.train.repeats as u64).map(|i| cfg.train.seed + i).collect();
    parallel_map(&seeds, jobs, |&s| run_detector(kind, data, cfg, s))
}

/// Order-preserving map over `items` with up to `jobs` scoped threads.
pub fn parallel_map<T, U, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(&f).collect::<Result<Vec<U>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
