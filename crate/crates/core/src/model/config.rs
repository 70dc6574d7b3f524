use serde::{Deserialize, Serialize};

use super::layout::NUM_SPECIALS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            context_length: 64,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            tie_embeddings: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < NUM_SPECIALS {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no room for the {NUM_SPECIALS} special tokens",
                self.vocab_size
            )));
        }
        if self.context_length < 16 {
            return Err(Error::Config(format!(
                "context_length must be at least 16, got {}",
                self.context_length
            )));
        }
        if self.n_layers == 0 || self.d_model == 0 {
            return Err(Error::Config("model needs at least one layer and d_model > 0".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }
}
