//! Small synthetic models for demos and tests.

use std::collections::BTreeSet;
use std::f32::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::tokenizer::split_words;
use crate::model::vocab::{CLS, MASK, PAD, SEP, UNK};
use crate::model::weights::names;
use crate::model::{ModelConfig, Tensor, Vocabulary, WeightSet};

/// Special tokens followed by the distinct pre-tokenized words of `texts`,
/// sorted.
pub fn vocab_from_texts<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    lowercase: bool,
) -> Result<Vocabulary> {
    let words: BTreeSet<String> = texts
        .into_iter()
        .flat_map(|t| split_words(t, lowercase))
        .filter(|w| ![PAD, UNK, CLS, SEP, MASK].contains(&w.as_str()))
        .collect();
    let tokens = [PAD, UNK, CLS, SEP, MASK]
        .into_iter()
        .map(String::from)
        .chain(words);
    Ok(Vocabulary::from_tokens(tokens)?.with_lowercase(lowercase))
}

#[derive(Debug, Clone, Copy)]
pub struct ToyShape {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_head: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
}

impl Default for ToyShape {
    fn default() -> Self {
        Self {
            num_layers: 2,
            num_heads: 2,
            d_head: 8,
            ffn_dim: 32,
            max_positions: 64,
        }
    }
}

impl ToyShape {
    pub fn config(&self, vocab: &Vocabulary) -> ModelConfig {
        ModelConfig {
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            d_model: self.num_heads * self.d_head,
            d_head: self.d_head,
            vocab_size: vocab.len(),
            max_positions: self.max_positions,
            ffn_dim: self.ffn_dim,
            layernorm_eps: 1e-12,
            lowercase: vocab.lowercase(),
        }
    }
}

/// Seeded random encoder over `vocab`. Embeddings are drawn with unit
/// variance, every other matrix scaled by `1/sqrt(fan_in)`.
pub fn random_model(vocab: &Vocabulary, shape: ToyShape, seed: u64) -> (ModelConfig, WeightSet) {
    let config = shape.config(vocab);
    let mut weights = WeightSet::random(&config, seed, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    let names: Vec<String> = weights.iter().map(|(n, _)| n.clone()).collect();
    for name in names {
        let t = weights.get_mut(&name).expect("listed tensor");
        if t.shape.len() == 2 && !name.starts_with("embeddings.") {
            let scale = 1.0 / (t.shape[0] as f32).sqrt();
            for v in &mut t.data {
                *v = normal.sample(&mut rng) * scale;
            }
        } else if name.ends_with(".bias") && !name.contains("LayerNorm") {
            for v in &mut t.data {
                *v = 0.1 * normal.sample(&mut rng);
            }
        }
    }
    (config, weights)
}

/// A one-layer, two-head model whose head 0 attends to the following
/// position, driven purely by position embeddings.
///
/// Layout of the 8-wide embedding: dims 0-3 carry `(cos, sin, -cos, -sin)`
/// of a position angle, dims 4-7 the same pattern for a token angle. Every
/// row has zero mean and constant norm, so the embedding norm only rescales
/// it. Head 0's query rotates the position angle one step forward and its key
/// reads it unrotated, so scores peak at key = query + 1.
pub fn positional_model(
    vocab: &Vocabulary,
    max_positions: usize,
    seed: u64,
) -> (ModelConfig, WeightSet) {
    let shape = ToyShape {
        num_layers: 1,
        num_heads: 2,
        d_head: 4,
        ffn_dim: 16,
        max_positions,
    };
    let (config, mut weights) = random_model(vocab, shape, seed);
    let d = config.d_model;
    let step = PI / max_positions as f32;
    let pattern = |angle: f32, offset: usize, row: &mut [f32]| {
        let (s, c) = angle.sin_cos();
        row[offset..offset + 4].copy_from_slice(&[c, s, -c, -s]);
    };

    let mut pos = Tensor::zeros(vec![max_positions, d]);
    for (p, row) in pos.data.chunks_mut(d).enumerate() {
        pattern(p as f32 * step, 0, row);
    }
    weights.insert(names::POSITION_EMBEDDINGS, pos);

    let golden = PI * (3.0 - 5f32.sqrt());
    let mut word = Tensor::zeros(vec![vocab.len(), d]);
    for (id, row) in word.data.chunks_mut(d).enumerate() {
        pattern(id as f32 * golden, 4, row);
    }
    weights.insert(names::WORD_EMBEDDINGS, word);
    weights.insert(names::EMBEDDING_NORM_WEIGHT, Tensor::filled(vec![d], 1.0));
    weights.insert(names::EMBEDDING_NORM_BIAS, Tensor::zeros(vec![d]));

    let sharpness = 200.0;
    let (sin, cos) = step.sin_cos();
    let query = weights
        .get_mut(&names::layer(0, &format!("{}.weight", names::QUERY)))
        .expect("query weight");
    for r in 0..d {
        for c in 0..4 {
            query.data[r * d + c] = 0.0;
        }
    }
    // [in x out]: out0 = c cos - s sin, out1 = c sin + s cos.
    query.data[0] = cos * sharpness;
    query.data[1] = sin * sharpness;
    query.data[d] = -sin * sharpness;
    query.data[d + 1] = cos * sharpness;
    let key = weights
        .get_mut(&names::layer(0, &format!("{}.weight", names::KEY)))
        .expect("key weight");
    for r in 0..d {
        for c in 0..4 {
            key.data[r * d + c] = 0.0;
        }
    }
    key.data[0] = 1.0;
    key.data[d + 1] = 1.0;
    for base in [names::QUERY, names::KEY] {
        let bias = weights
            .get_mut(&names::layer(0, &format!("{base}.bias")))
            .expect("projection bias");
        bias.data[..4].fill(0.0);
    }
    (config, weights)
}
