use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_eps() -> f64 {
    1e-12
}

/// Shape of a BERT-style encoder. Layers and heads are 0-indexed everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub ffn_dim: usize,
    #[serde(default = "default_eps")]
    pub layernorm_eps: f64,
    /// Input text is lowercased and accent-stripped before vocabulary lookup.
    #[serde(default)]
    pub lowercase: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_layers < 1 {
            return fail("num_layers must be at least 1".into());
        }
        if self.num_heads < 1 {
            return fail("num_heads must be at least 1".into());
        }
        if self.d_head < 1 || self.vocab_size < 1 || self.ffn_dim < 1 {
            return fail("d_head, vocab_size and ffn_dim must be positive".into());
        }
        if self.d_model != self.num_heads * self.d_head {
            return fail(format!(
                "d_model ({}) must equal num_heads ({}) x d_head ({})",
                self.d_model, self.num_heads, self.d_head
            ));
        }
        if self.max_positions < 2 {
            return fail("max_positions must leave room for [CLS] and [SEP]".into());
        }
        if !(self.layernorm_eps > 0.0 && self.layernorm_eps.is_finite()) {
            return fail("layernorm_eps must be a positive finite number".into());
        }
        Ok(())
    }

    /// Width of a head embedding row: every head's context, concatenated.
    pub fn head_embedding_dim(&self) -> usize {
        self.num_heads * self.d_head
    }
}
