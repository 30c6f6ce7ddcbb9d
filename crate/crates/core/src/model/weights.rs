//! Named f32 tensors and the on-disk weight container.
//!
//! A model directory holds `manifest.json` (config plus tensor name ->
//! `{shape, dtype, offset}`) and `weights.bin` (little-endian f32, tensors
//! concatenated in manifest order). Matrices are stored `[in x out]`: a
//! projection is `y = x W + b`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
const FORMAT: &str = "exlens-weights-v1";

pub mod names {
    pub const WORD_EMBEDDINGS: &str = "embeddings.word_embeddings.weight";
    pub const POSITION_EMBEDDINGS: &str = "embeddings.position_embeddings.weight";
    pub const TOKEN_TYPE_EMBEDDINGS: &str = "embeddings.token_type_embeddings.weight";
    pub const EMBEDDING_NORM_WEIGHT: &str = "embeddings.LayerNorm.weight";
    pub const EMBEDDING_NORM_BIAS: &str = "embeddings.LayerNorm.bias";
    pub const MLM_TRANSFORM_WEIGHT: &str = "cls.predictions.transform.dense.weight";
    pub const MLM_TRANSFORM_BIAS: &str = "cls.predictions.transform.dense.bias";
    pub const MLM_NORM_WEIGHT: &str = "cls.predictions.transform.LayerNorm.weight";
    pub const MLM_NORM_BIAS: &str = "cls.predictions.transform.LayerNorm.bias";
    /// Optional; tied to the transposed word embeddings when absent.
    pub const MLM_DECODER_WEIGHT: &str = "cls.predictions.decoder.weight";
    pub const MLM_DECODER_BIAS: &str = "cls.predictions.bias";

    pub fn layer(l: usize, suffix: &str) -> String {
        format!("encoder.layer.{l}.{suffix}")
    }

    pub const QUERY: &str = "attention.self.query";
    pub const KEY: &str = "attention.self.key";
    pub const VALUE: &str = "attention.self.value";
    pub const ATTENTION_OUTPUT: &str = "attention.output.dense";
    pub const ATTENTION_NORM: &str = "attention.output.LayerNorm";
    pub const FFN_INNER: &str = "intermediate.dense";
    pub const FFN_OUTER: &str = "output.dense";
    pub const FFN_NORM: &str = "output.LayerNorm";
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Weights(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightManifest {
    pub format: String,
    pub config: ModelConfig,
    pub tensors: BTreeMap<String, TensorEntry>,
}

/// Every tensor an encoder of the given shape needs, with its shape.
/// Optional tensors (token types, untied decoder) are not listed.
pub fn required_tensors(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    use names::*;
    let d = config.d_model;
    let mut out = vec![
        (WORD_EMBEDDINGS.to_string(), vec![config.vocab_size, d]),
        (
            POSITION_EMBEDDINGS.to_string(),
            vec![config.max_positions, d],
        ),
        (EMBEDDING_NORM_WEIGHT.to_string(), vec![d]),
        (EMBEDDING_NORM_BIAS.to_string(), vec![d]),
    ];
    for l in 0..config.num_layers {
        let linear = |out: &mut Vec<(String, Vec<usize>)>, base: &str, i: usize, o: usize| {
            out.push((layer(l, &format!("{base}.weight")), vec![i, o]));
            out.push((layer(l, &format!("{base}.bias")), vec![o]));
        };
        linear(&mut out, QUERY, d, d);
        linear(&mut out, KEY, d, d);
        linear(&mut out, VALUE, d, d);
        linear(&mut out, ATTENTION_OUTPUT, d, d);
        linear(&mut out, FFN_INNER, d, config.ffn_dim);
        linear(&mut out, FFN_OUTER, config.ffn_dim, d);
        for norm in [ATTENTION_NORM, FFN_NORM] {
            out.push((layer(l, &format!("{norm}.weight")), vec![d]));
            out.push((layer(l, &format!("{norm}.bias")), vec![d]));
        }
    }
    out.extend([
        (MLM_TRANSFORM_WEIGHT.to_string(), vec![d, d]),
        (MLM_TRANSFORM_BIAS.to_string(), vec![d]),
        (MLM_NORM_WEIGHT.to_string(), vec![d]),
        (MLM_NORM_BIAS.to_string(), vec![d]),
        (MLM_DECODER_BIAS.to_string(), vec![config.vocab_size]),
    ]);
    out
}

/// Named tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSet {
    tensors: BTreeMap<String, Tensor>,
}

impl WeightSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Fetches a tensor and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Weights(format!("missing tensor {name}")))?;
        if t.shape != shape {
            return Err(Error::Weights(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    /// Checks that every required tensor exists with its declared shape.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        for (name, shape) in required_tensors(config) {
            self.expect(&name, &shape)?;
        }
        if let Some(t) = self.get(names::TOKEN_TYPE_EMBEDDINGS) {
            if t.shape.len() != 2 || t.shape[1] != config.d_model || t.shape[0] == 0 {
                return Err(Error::Weights(format!(
                    "token type embeddings have shape {:?}",
                    t.shape
                )));
            }
        }
        if self.get(names::MLM_DECODER_WEIGHT).is_some() {
            self.expect(
                names::MLM_DECODER_WEIGHT,
                &[config.d_model, config.vocab_size],
            )?;
        }
        Ok(())
    }

    /// Gaussian-initialized weights with unit layer norms, for toy models.
    pub fn random(config: &ModelConfig, seed: u64, std_dev: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f32, std_dev).expect("finite std dev");
        let mut set = Self::new();
        for (name, shape) in required_tensors(config) {
            let tensor = if name.ends_with("LayerNorm.weight") {
                Tensor::filled(shape, 1.0)
            } else if name.ends_with("LayerNorm.bias") {
                Tensor::zeros(shape)
            } else {
                let n: usize = shape.iter().product();
                Tensor {
                    shape,
                    data: (0..n).map(|_| normal.sample(&mut rng)).collect(),
                }
            };
            set.insert(name, tensor);
        }
        set
    }

    pub fn manifest(&self, config: &ModelConfig) -> WeightManifest {
        let mut offset = 0u64;
        let mut tensors = BTreeMap::new();
        for (name, t) in &self.tensors {
            tensors.insert(
                name.clone(),
                TensorEntry {
                    shape: t.shape.clone(),
                    dtype: "f32".into(),
                    offset,
                },
            );
            offset += 4 * t.data.len() as u64;
        }
        WeightManifest {
            format: FORMAT.into(),
            config: config.clone(),
            tensors,
        }
    }

    fn to_le_bytes(&self) -> Vec<u8> {
        let total: usize = self.tensors.values().map(|t| t.data.len()).sum();
        let mut bytes = Vec::with_capacity(total * 4);
        for t in self.tensors.values() {
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    /// Writes `manifest.json` and `weights.bin` into `dir`.
    pub fn save(&self, config: &ModelConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = serde_json::to_vec_pretty(&self.manifest(config))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(WEIGHTS_FILE);
        fs::write(&path, self.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    /// Reads a weight container, returning its config and tensors.
    pub fn load(dir: &Path) -> Result<(ModelConfig, Self)> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: WeightManifest = serde_json::from_slice(&text)?;
        let path = dir.join(WEIGHTS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let mut set = Self::new();
        for (name, entry) in &manifest.tensors {
            if entry.dtype != "f32" {
                return Err(Error::Weights(format!(
                    "tensor {name} has unsupported dtype {}",
                    entry.dtype
                )));
            }
            let n: usize = entry.shape.iter().product();
            let start = usize::try_from(entry.offset)
                .map_err(|_| Error::Weights(format!("tensor {name} offset overflows")))?;
            let end = start + n * 4;
            if end > bytes.len() {
                return Err(Error::Integrity {
                    path: path.clone(),
                    message: format!(
                        "tensor {name} spans bytes {start}..{end} but the file has {}",
                        bytes.len()
                    ),
                });
            }
            let data = bytes[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            set.insert(name.clone(), Tensor::new(entry.shape.clone(), data)?);
        }
        Ok((manifest.config, set))
    }

    /// Content hash of config, tensors and vocabulary.
    pub fn fingerprint(&self, config: &ModelConfig, vocab_tokens: &[String]) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.manifest(config)).expect("manifest serializes"));
        for t in self.tensors.values() {
            for v in &t.data {
                hasher.update(v.to_le_bytes());
            }
        }
        for tok in vocab_tokens {
            hasher.update(tok.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}
