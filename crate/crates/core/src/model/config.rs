use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenizer::SPECIAL_TOKENS;
use crate::error::{Error, Result};

/// Shape and seed of a decoder-only transformer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub seed: u64,
    /// Apply RMS normalization before the unembedding. Disabling it makes the
    /// final residual stream map linearly onto the logits.
    #[serde(default = "default_true")]
    pub final_norm: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 128,
            d_ff: 512,
            vocab_size: 256 + SPECIAL_TOKENS,
            max_context: 256,
            seed: 0,
            final_norm: true,
        }
    }
}

impl ModelConfig {
    /// Two layers of width 16; fast enough for unit tests.
    pub fn tiny() -> Self {
        Self {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_context: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("model config: {m}")));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("all dimensions must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.vocab_size < 256 + SPECIAL_TOKENS {
            return bad(format!("vocab_size {} below {}", self.vocab_size, 256 + SPECIAL_TOKENS));
        }
        if self.max_context == 0 {
            return bad("max_context must be positive".into());
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Canonical serialized record, as embedded in checkpoints.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_record(record: &str) -> Result<Self> {
        serde_json::from_str(record).map_err(|e| Error::Format(format!("config record: {e}")))
    }

    /// First eight bytes of the SHA-256 of the canonical record.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_record().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}
