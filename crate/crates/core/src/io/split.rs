use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::alignment::AlignmentResult;
use crate::error::{Error, Result};
use crate::noise_sim::RngSeed;

/// How documents are divided into train / validation / test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    Fractions {
        train: f64,
        val: f64,
        test: f64,
        seed: u64,
    },
    Explicit {
        train: Vec<String>,
        val: Vec<String>,
        test: Vec<String>,
    },
    /// A dataset-provided test set (e.g. FUNSD's 50 testing forms); the
    /// rest is split randomly into train and validation.
    PredefinedTest {
        test: Vec<String>,
        val_fraction: f64,
        seed: u64,
    },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<AlignmentResult>,
    pub val: Vec<AlignmentResult>,
    pub test: Vec<AlignmentResult>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Train,
    Val,
    Test,
}

fn shuffled_ids(ids: &mut Vec<&str>, seed: u64) {
    ids.sort_unstable();
    ids.shuffle(&mut RngSeed(seed).rng());
}

/// Document-level split. Partitions keep input order.
pub fn split_dataset(docs: &[AlignmentResult], spec: &SplitSpec) -> Result<DatasetSplit> {
    let mut assignment: HashMap<&str, Part> = HashMap::new();
    match spec {
        SplitSpec::Fractions { train, val, test, seed } => {
            if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(*f))
                || (train + val + test - 1.0).abs() > 1e-9
            {
                return Err(Error::invalid(format!(
                    "split fractions {train}/{val}/{test} must be in [0,1] and sum to 1"
                )));
            }
            let mut ids: Vec<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
            shuffled_ids(&mut ids, *seed);
            let n = ids.len() as f64;
            let n_train = (train * n).round() as usize;
            let n_val = ((val * n).round() as usize).min(ids.len() - n_train.min(ids.len()));
            for (k, id) in ids.into_iter().enumerate() {
                let part = if k < n_train {
                    Part::Train
                } else if k < n_train + n_val {
                    Part::Val
                } else {
                    Part::Test
                };
                assignment.insert(id, part);
            }
        }
        SplitSpec::Explicit { train, val, test } => {
            for (list, part) in [(train, Part::Train), (val, Part::Val), (test, Part::Test)] {
                for id in list {
                    if assignment.insert(id.as_str(), part).is_some() {
                        return Err(Error::invalid(format!("document {id} listed in two partitions")));
                    }
                }
            }
        }
        SplitSpec::PredefinedTest { test, val_fraction, seed } => {
            if !(0.0..=1.0).contains(val_fraction) {
                return Err(Error::invalid("validation fraction must be in [0,1]"));
            }
            let test_ids: HashSet<&str> = test.iter().map(String::as_str).collect();
            let mut rest: Vec<&str> = docs
                .iter()
                .map(|d| d.doc_id.as_str())
                .filter(|id| !test_ids.contains(id))
                .collect();
            shuffled_ids(&mut rest, *seed);
            let n_val = (val_fraction * rest.len() as f64).round() as usize;
            for id in &test_ids {
                assignment.insert(id, Part::Test);
            }
            for (k, id) in rest.into_iter().enumerate() {
                assignment.insert(id, if k < n_val { Part::Val } else { Part::Train });
            }
        }
    }

    let known: HashSet<&str> = docs.iter().map(|d| d.doc_id.as_str()).collect();
    if let Some(missing) = assignment.keys().find(|id| !known.contains(*id)) {
        return Err(Error::invalid(format!("split references unknown document {missing}")));
    }
    let mut out = DatasetSplit {
        train: vec![],
        val: vec![],
        test: vec![],
        warnings: vec![],
    };
    for d in docs {
        match assignment.get(d.doc_id.as_str()) {
            Some(Part::Train) => out.train.push(d.clone()),
            Some(Part::Val) => out.val.push(d.clone()),
            Some(Part::Test) => out.test.push(d.clone()),
            None => {
                return Err(Error::invalid(format!(
                    "document {} is not assigned to any partition",
                    d.doc_id
                )))
            }
        }
    }
    for (name, part) in [("train", &out.train), ("validation", &out.val), ("test", &out.test)] {
        if part.is_empty() {
            let msg = format!("{name} partition is empty");
            log::warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    Ok(out)
}
