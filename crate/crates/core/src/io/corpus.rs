use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_sim::NoisedToken;

/// First record of a pretraining corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub toolkit_version: String,
    pub config: serde_json::Value,
    pub vocab: Vec<String>,
}

/// One noised sequence: parallel arrays over token positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSequence {
    pub original: Vec<u32>,
    pub observed: Vec<u32>,
    pub confidence: Vec<f64>,
    pub noised: Vec<bool>,
}

impl CorpusSequence {
    pub fn from_tokens(tokens: &[NoisedToken]) -> Self {
        CorpusSequence {
            original: tokens.iter().map(|t| t.original_id).collect(),
            observed: tokens.iter().map(|t| t.observed_id).collect(),
            confidence: tokens.iter().map(|t| t.confidence).collect(),
            noised: tokens.iter().map(|t| t.was_noised).collect(),
        }
    }

    pub fn tokens(&self) -> Vec<NoisedToken> {
        (0..self.original.len())
            .map(|i| NoisedToken {
                original_id: self.original[i],
                observed_id: self.observed[i],
                confidence: self.confidence[i],
                was_noised: self.noised[i],
            })
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Header(CorpusHeader),
    Sequence(CorpusSequence),
}

/// Line-delimited JSON: a header record followed by one record per sequence.
pub fn write_corpus(path: &Path, header: &CorpusHeader, sequences: &[CorpusSequence]) -> Result<()> {
    let mut out = Vec::new();
    let mut line = |r: &Record| -> Result<()> {
        let v = serde_json::to_value(r)?;
        serde_json::to_writer(&mut out, &v)?;
        out.push(b'\n');
        Ok(())
    };
    line(&Record::Header(header.clone()))?;
    for s in sequences {
        line(&Record::Sequence(s.clone()))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<(CorpusHeader, Vec<CorpusSequence>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut seqs = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", i + 1, e.column()),
            message: e.to_string(),
        })?;
        match rec {
            Record::Header(h) if header.is_none() => header = Some(h),
            Record::Header(_) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    location: format!("line {}", i + 1),
                    message: "second header record".into(),
                })
            }
            Record::Sequence(s) => {
                let n = s.original.len();
                if s.observed.len() != n || s.confidence.len() != n || s.noised.len() != n {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        location: format!("line {}", i + 1),
                        message: "sequence arrays differ in length".into(),
                    });
                }
                seqs.push(s)
            }
        }
    }
    let header = header.ok_or_else(|| Error::Validation {
        path: path.to_path_buf(),
        message: "corpus has no header record".into(),
    })?;
    Ok((header, seqs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        let header = CorpusHeader {
            toolkit_version: "0".into(),
            config: serde_json::json!({"seed": 3}),
            vocab: vec!["[PAD]".into(), "a".into()],
        };
        let seqs = vec![CorpusSequence {
            original: vec![1, 1],
            observed: vec![1, 0],
            confidence: vec![0.91, 0.2],
            noised: vec![false, true],
        }];
        write_corpus(&p, &header, &seqs).unwrap();
        let (h, s) = read_corpus(&p).unwrap();
        assert_eq!(h, header);
        assert_eq!(s, seqs);
        assert_eq!(s[0].tokens().len(), 2);
    }
}
