use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{micro_f1, PrfScore};

/// Flags a box as erroneous iff its confidence is at most `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub threshold: f64,
}

impl BaselineModel {
    pub fn predict(&self, confidence: f64) -> bool {
        confidence <= self.threshold
    }

    pub fn predict_all(&self, confidences: &[f64]) -> Vec<bool> {
        confidences.iter().map(|&c| self.predict(c)).collect()
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 100].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Distinct 1st..99th percentiles of the confidences, ascending.
pub fn percentile_candidates(confidences: &[f64]) -> Result<Vec<f64>> {
    if confidences.is_empty() {
        return Err(Error::EmptyInput("training confidences"));
    }
    let mut sorted = confidences.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = (1..=99).map(|q| percentile(&sorted, q as f64)).collect();
    out.dedup();
    Ok(out)
}

/// Candidate with the highest validation F1; ties go to the lower threshold.
pub fn select_threshold(
    candidates: &[f64],
    val_confidences: &[f64],
    val_labels: &[bool],
) -> Result<(BaselineModel, PrfScore)> {
    if candidates.is_empty() || val_confidences.is_empty() {
        return Err(Error::EmptyInput("baseline candidates or validation set"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(BaselineModel, PrfScore)> = None;
    for t in sorted {
        let model = BaselineModel { threshold: t };
        let score = micro_f1(&model.predict_all(val_confidences), val_labels)?;
        if best.as_ref().map_or(true, |(_, b)| score.f1 > b.f1) {
            best = Some((model, score));
        }
    }
    Ok(best.unwrap())
}

pub fn fit_baseline(
    train_confidences: &[f64],
    val_confidences: &[f64],
    val_labels: &[bool],
) -> Result<(BaselineModel, PrfScore)> {
    let candidates = percentile_candidates(train_confidences)?;
    select_threshold(&candidates, val_confidences, val_labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn picks_separating_threshold() {
        let (m, s) = select_threshold(
            &[0.3, 0.6, 0.85],
            &[0.2, 0.5, 0.8, 0.9],
            &[true, true, false, false],
        )
        .unwrap();
        assert_eq!(m.threshold, 0.6);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn all_correct_returns_lowest() {
        let (m, s) = select_threshold(&[0.3, 0.6, 0.85], &[0.2, 0.9], &[false, false]).unwrap();
        assert_eq!(m.threshold, 0.3);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn constant_confidences_single_candidate() {
        assert_eq!(percentile_candidates(&[0.7; 12]).unwrap(), vec![0.7]);
    }

    #[test]
    fn percentile_matches_linear_rule() {
        let c = percentile_candidates(&[0.0, 1.0]).unwrap();
        assert_eq!(c.len(), 99);
        assert!((c[49] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn chosen_threshold_is_a_candidate(
            train in prop::collection::vec(0.0f64..=1.0, 1..40),
            val in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..40),
        ) {
            let (vc, vl): (Vec<f64>, Vec<bool>) = val.into_iter().unzip();
            let cands = percentile_candidates(&train).unwrap();
            let (m, _) = fit_baseline(&train, &vc, &vl).unwrap();
            prop_assert!(cands.contains(&m.threshold));
        }
    }
}
