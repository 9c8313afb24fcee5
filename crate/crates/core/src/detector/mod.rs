//! Box-level error detectors: the confidence-threshold baseline and a
//! small encoder whose token embeddings blend in OCR confidence.

pub mod baseline;
pub mod checkpoint;
pub mod encoding;
pub mod experiment;
pub mod model;
pub mod optim;
pub mod params;
pub mod sweep;
pub mod train;
pub mod vocab;

pub use baseline::{fit_baseline, percentile_candidates, select_threshold, BaselineModel};
pub use encoding::{encode_components, EncodedWindow};
pub use experiment::{
    parallel_map, run_detector, run_repeats, run_repeats_parallel, train_detector, DetectorKind, ExperimentConfig,
    PreparedSplit, RunResult, TrainedRun,
};
pub use model::{interpolate_embedding, ConfidenceMode, DetectorModel, EncoderConfig};
pub use sweep::{alpha_grid, alpha_sweep, SweepReport, SweepRow};
pub use train::{
    classify_boxes, evaluate, finetune, pretrain, run_protocol, EarlyStopping, PretrainConfig, TrainConfig,
};
pub use vocab::Vocab;
