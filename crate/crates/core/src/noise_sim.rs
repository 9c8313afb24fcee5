//! Confidence-annotated token substitution noise.
//!
//! Each non-special token draws a confidence `p ~ Beta(4, 1)` and is swapped
//! for a uniformly random other ordinary token when `p < U(0, 1)`, so the
//! marginal substitution rate is `1 - E[p] = 0.2` and the per-token error
//! probability given its confidence is exactly `1 - p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisedToken {
    pub original_id: u32,
    pub observed_id: u32,
    pub confidence: f64,
    pub was_noised: bool,
}

/// Root seed of a deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent stream for one worker of a fan-out.
    pub fn worker_rng(self, worker_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(worker_index);
        rng
    }
}

/// One Beta(4, 1) draw by inverse CDF: `F(x) = x^4`, so `F^{-1}(u) = u^{1/4}`.
pub fn sample_beta_4_1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen::<f64>().powf(0.25)
}

pub fn beta_4_1_cdf(x: f64) -> f64 {
    x.clamp(0.0, 1.0).powi(4)
}

#[derive(Debug, Clone)]
pub struct NoiseSimulator {
    vocab_size: u32,
    /// Ordinary (non-special) ids, ascending.
    candidates: Vec<u32>,
    is_special: Vec<bool>,
}

impl NoiseSimulator {
    pub fn new(vocab_size: u32, special_ids: &[u32]) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid(format!(
                "noise simulation needs a vocabulary of at least 2 tokens, got {vocab_size}"
            )));
        }
        let mut is_special = vec![false; vocab_size as usize];
        for &s in special_ids {
            if s >= vocab_size {
                return Err(Error::invalid(format!("special id {s} outside vocabulary")));
            }
            is_special[s as usize] = true;
        }
        let candidates: Vec<u32> = (0..vocab_size).filter(|&i| !is_special[i as usize]).collect();
        if candidates.len() < 2 {
            return Err(Error::invalid(
                "noise simulation needs at least 2 non-special tokens",
            ));
        }
        Ok(NoiseSimulator {
            vocab_size,
            candidates,
            is_special,
        })
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn is_special(&self, id: u32) -> bool {
        self.is_special[id as usize]
    }

    fn replacement<R: Rng + ?Sized>(&self, original: u32, rng: &mut R) -> u32 {
        // Draw among the k-1 candidates other than `original`.
        let pos = self.candidates.binary_search(&original).expect("ordinary token");
        let mut k = rng.gen_range(0..self.candidates.len() - 1);
        if k >= pos {
            k += 1;
        }
        self.candidates[k]
    }

    /// Noises one sequence. Special tokens pass through with confidence 1.
    pub fn noise_sequence<R: Rng + ?Sized>(
        &self,
        token_ids: &[u32],
        rng: &mut R,
    ) -> Result<Vec<NoisedToken>> {
        token_ids
            .iter()
            .map(|&id| {
                if id >= self.vocab_size {
                    return Err(Error::invalid(format!(
                        "token id {id} outside vocabulary of size {}",
                        self.vocab_size
                    )));
                }
                if self.is_special(id) {
                    return Ok(NoisedToken {
                        original_id: id,
                        observed_id: id,
                        confidence: 1.0,
                        was_noised: false,
                    });
                }
                let p = sample_beta_4_1(rng);
                let u: f64 = rng.gen();
                let was_noised = p < u;
                let observed_id = if was_noised { self.replacement(id, rng) } else { id };
                Ok(NoisedToken {
                    original_id: id,
                    observed_id,
                    confidence: p,
                    was_noised,
                })
            })
            .collect()
    }
}

/// Convenience wrapper without special tokens.
pub fn noise_sequence<R: Rng + ?Sized>(
    token_ids: &[u32],
    vocab_size: u32,
    rng: &mut R,
) -> Result<Vec<NoisedToken>> {
    NoiseSimulator::new(vocab_size, &[])?.noise_sequence(token_ids, rng)
}
