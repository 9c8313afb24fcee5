//! Binary model container: magic, version, JSON header, raw f64 tensors.
//!
//! Layout: `OCRCKPT\0` | u32 version | u64 header length | header JSON |
//! tensor data (little-endian f64, header order).

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ConfidenceMode, DetectorModel, EncoderConfig};
use super::params::{ParamStore, Tensor};
use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::io::TOOLKIT_VERSION;

pub const MAGIC: &[u8; 8] = b"OCRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// Decimal string; the word position is 128-bit.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().to_vec(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must have 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    toolkit_version: String,
    config: EncoderConfig,
    mode: ConfidenceMode,
    vocab: Option<Vocab>,
    rng: RngState,
    tensors: Vec<TensorHeader>,
}

/// Everything a checkpoint restores.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: DetectorModel,
    pub vocab: Option<Vocab>,
    pub rng: ChaCha8Rng,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    model: &DetectorModel,
    vocab: Option<&Vocab>,
    rng: &ChaCha8Rng,
) -> Result<()> {
    let header = Header {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: model.config.clone(),
        mode: model.mode,
        vocab: vocab.cloned(),
        rng: RngState::capture(rng),
        tensors: model
            .params
            .tensors
            .iter()
            .map(|t| TensorHeader {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let io = |e| Error::io("<checkpoint>", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    for t in &model.params.tensors {
        let mut buf = Vec::with_capacity(t.data.len() * 8);
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let truncated = |_| Error::Checkpoint("truncated checkpoint".into());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(truncated)?;
    let version = u32::from_le_bytes(b4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(truncated)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(truncated)?;
    let header: Header = serde_json::from_slice(&json)?;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for th in header.tensors {
        let n: usize = th.shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw).map_err(truncated)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor {
            name: th.name,
            shape: th.shape,
            data,
        });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(truncated)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    let model = DetectorModel::from_parts(header.config, header.mode, ParamStore { tensors })?;
    Ok(Checkpoint {
        model,
        vocab: header.vocab,
        rng: header.rng.restore()?,
    })
}

pub fn save_checkpoint(path: &Path, model: &DetectorModel, vocab: Option<&Vocab>, rng: &ChaCha8Rng) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, model, vocab, rng)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
