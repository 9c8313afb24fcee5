use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{pearson, std_dev, PearsonResult};

/// Lower and upper alpha of the correlation window that leaves out the
/// high-alpha endpoints.
pub const CORRELATION_WINDOW: (f64, f64) = (0.1, 0.8);

/// `0, step, 2*step, ..., 1`; `step` must divide 1 evenly.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("grid step {step} must be in (0,1]")));
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("grid step {step} does not divide 1")));
    }
    let n = n as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub f1_scores: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
    /// Relative to alpha = 0, or the absolute difference when flagged.
    pub improvement: f64,
    pub absolute_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub pearson_window: Option<PearsonResult>,
    pub pearson_full: Option<PearsonResult>,
}

impl SweepReport {
    pub fn best(&self) -> &SweepRow {
        self.rows
            .iter()
            .max_by(|a, b| a.improvement.total_cmp(&b.improvement).then(b.alpha.total_cmp(&a.alpha)))
            .expect("nonempty sweep")
    }
}

/// `(f - f0) / f0`, or `f - f0` flagged when `f0` is zero.
pub fn relative_improvement(f1: f64, f1_zero: f64) -> (f64, bool) {
    if f1_zero == 0.0 {
        (f1 - f1_zero, true)
    } else {
        ((f1 - f1_zero) / f1_zero, false)
    }
}

fn correlation(rows: &[&SweepRow]) -> Option<PearsonResult> {
    let x: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.improvement).collect();
    pearson(&x, &y).ok()
}

/// Builds the sweep table from per-alpha test F1 samples. The first grid
/// point must be alpha = 0.
pub fn summarize_sweep(samples: Vec<(f64, Vec<f64>)>) -> Result<SweepReport> {
    match samples.first() {
        Some((a, _)) if *a == 0.0 => {}
        _ => return Err(Error::invalid("sweep must start at alpha = 0")),
    }
    if samples.iter().any(|(_, s)| s.is_empty()) {
        return Err(Error::EmptyInput("sweep repeats"));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let f1_zero = mean(&samples[0].1);
    let rows: Vec<SweepRow> = samples
        .into_iter()
        .map(|(alpha, f1_scores)| {
            let mean_f1 = mean(&f1_scores);
            let (improvement, absolute_fallback) = relative_improvement(mean_f1, f1_zero);
            SweepRow {
                alpha,
                std_f1: std_dev(&f1_scores),
                mean_f1,
                f1_scores,
                improvement,
                absolute_fallback,
            }
        })
        .collect();
    let (lo, hi) = CORRELATION_WINDOW;
    let window: Vec<&SweepRow> = rows
        .iter()
        .filter(|r| r.alpha >= lo - 1e-9 && r.alpha <= hi + 1e-9)
        .collect();
    let all: Vec<&SweepRow> = rows.iter().collect();
    Ok(SweepReport {
        pearson_window: correlation(&window),
        pearson_full: correlation(&all),
        rows,
    })
}

/// Runs `run(alpha, repeat)` on every grid point and repeat.
pub fn alpha_sweep<F>(grid: &[f64], repeats: usize, mut run: F) -> Result<SweepReport>
where
    F: FnMut(f64, usize) -> Result<f64>,
{
    let mut samples = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let scores = (0..repeats).map(|r| run(alpha, r)).collect::<Result<Vec<_>>>()?;
        samples.push((alpha, scores));
    }
    summarize_sweep(samples)
}
