//! Toolkit for studying OCR confidence scores: aligning OCR output with
//! ground truth, measuring error and calibration, and training
//! confidence-aware box-level error detectors.

pub mod alignment;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod noise_sim;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
