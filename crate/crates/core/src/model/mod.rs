//! BERT-shaped encoder, its tokenizer, and probes over captured activations.

pub mod config;
pub mod encoder;
pub mod probe;
pub mod tokenizer;
pub mod vocab;
pub mod weights;

use std::collections::BTreeSet;
use std::path::Path;

pub use config::ModelConfig;
pub use encoder::{Encoder, ForwardTrace, LayerTrace};
pub use probe::{
    aggregate_attention, head_embedding, max_attention_target, mlm_topk, token_embedding,
    Prediction,
};
pub use tokenizer::{mask_tokens, tokenize, TokenizedInput};
pub use vocab::Vocabulary;
pub use weights::{Tensor, WeightSet};

use crate::error::{Error, Result};

/// Encoder plus vocabulary, identified by a content fingerprint.
#[derive(Debug, Clone)]
pub struct Model {
    encoder: Encoder,
    vocab: Vocabulary,
    fingerprint: String,
}

impl Model {
    pub fn new(config: ModelConfig, weights: &WeightSet, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != config.vocab_size {
            return Err(Error::Vocab(format!(
                "vocabulary has {} tokens, model expects {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let fingerprint = weights.fingerprint(&config, vocab.tokens());
        let vocab = vocab.with_lowercase(config.lowercase);
        let encoder = Encoder::new(config, weights)?;
        Ok(Self {
            encoder,
            vocab,
            fingerprint,
        })
    }

    /// Loads a model directory. The vocabulary defaults to `<dir>/vocab.txt`.
    pub fn load(dir: &Path, vocab_path: Option<&Path>) -> Result<Self> {
        let (config, weights) = WeightSet::load(dir)?;
        let default_vocab = dir.join(weights::VOCAB_FILE);
        let vocab = Vocabulary::load(vocab_path.unwrap_or(&default_vocab))?;
        Self::new(config, &weights, vocab)
    }

    /// Writes a complete model directory, vocabulary included.
    pub fn save_dir(
        dir: &Path,
        config: &ModelConfig,
        weights: &WeightSet,
        vocab: &Vocabulary,
    ) -> Result<()> {
        weights.save(config, dir)?;
        let path = dir.join(weights::VOCAB_FILE);
        let mut text = vocab.tokens().join("\n");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn config(&self) -> &ModelConfig {
        self.encoder.config()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenizedInput> {
        tokenize(text, &self.vocab, self.config().max_positions)
    }

    /// Tokenizes and masks in one step.
    pub fn prepare(&self, text: &str, mask: &BTreeSet<usize>) -> Result<TokenizedInput> {
        mask_tokens(&self.tokenize(text)?, mask, &self.vocab)
    }

    pub fn forward(&self, input: &TokenizedInput) -> Result<ForwardTrace> {
        self.encoder.forward(input)
    }

    pub fn all_heads(&self) -> BTreeSet<usize> {
        (0..self.config().num_heads).collect()
    }
}
