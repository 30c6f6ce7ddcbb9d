//! Per-layer token and head embeddings for every searchable corpus token.
//!
//! On disk an index directory holds `manifest.json`, `corpus.json` and, for
//! each layer `l`, `layers/<l>/token.f32`, `layers/<l>/head.f32` and
//! `layers/<l>/norms.f32` (token row norms followed by head row norms). All
//! binaries are little-endian f32, row-major.

pub mod search;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use search::{mask_query_heads, search, SearchHit, SearchKind, SearchQuery, DEFAULT_K};

use crate::corpus::AnnotatedCorpus;
use crate::error::{Error, Result};
use crate::model::{head_embedding, token_embedding, Model};

pub const INDEX_MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "exlens-index-v1";

/// Dense row-major f32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn row_norms(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .map(|&v| (v as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMatrices {
    pub token: Matrix,
    pub head: Matrix,
    pub token_norms: Vec<f64>,
    pub head_norms: Vec<f64>,
}

impl LayerMatrices {
    pub fn new(token: Matrix, head: Matrix) -> Result<Self> {
        if token.rows() != head.rows() {
            return Err(Error::Dimension(format!(
                "token matrix has {} rows, head matrix {}",
                token.rows(),
                head.rows()
            )));
        }
        Ok(Self {
            token_norms: token.row_norms(),
            head_norms: head.row_norms(),
            token,
            head,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format: String,
    pub model_fingerprint: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub n_search: usize,
    /// Corpus global id of every row.
    pub row_ids: Vec<usize>,
}

impl IndexManifest {
    pub fn new(
        model_fingerprint: String,
        num_layers: usize,
        num_heads: usize,
        d_model: usize,
        d_head: usize,
        row_ids: Vec<usize>,
    ) -> Self {
        Self {
            format: FORMAT.into(),
            model_fingerprint,
            num_layers,
            num_heads,
            d_model,
            d_head,
            n_search: row_ids.len(),
            row_ids,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    manifest: IndexManifest,
    layers: Vec<LayerMatrices>,
}

impl EmbeddingIndex {
    pub fn new(manifest: IndexManifest, layers: Vec<LayerMatrices>) -> Result<Self> {
        let dim = |m: String| Err(Error::Dimension(m));
        if layers.len() != manifest.num_layers {
            return dim(format!(
                "manifest declares {} layers, got {}",
                manifest.num_layers,
                layers.len()
            ));
        }
        if manifest.n_search != manifest.row_ids.len() {
            return dim("n_search disagrees with the row id list".into());
        }
        for (l, m) in layers.iter().enumerate() {
            if m.token.rows() != manifest.n_search || m.head.rows() != manifest.n_search {
                return dim(format!("layer {l} row count differs from n_search"));
            }
            if m.token.cols() != manifest.d_model {
                return dim(format!("layer {l} token width is not d_model"));
            }
            if m.head.cols() != manifest.num_heads * manifest.d_head {
                return dim(format!("layer {l} head width is not num_heads x d_head"));
            }
        }
        Ok(Self { manifest, layers })
    }

    pub fn manifest(&self) -> &IndexManifest {
        &self.manifest
    }

    pub fn num_rows(&self) -> usize {
        self.manifest.n_search
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.manifest.row_ids
    }

    pub fn layers(&self) -> &[LayerMatrices] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> Result<&LayerMatrices> {
        self.layers.get(l).ok_or(Error::Bounds {
            what: "layer",
            index: l,
            limit: self.layers.len(),
        })
    }

    /// Fails unless the index was built for the model with `fingerprint`.
    pub fn check_model(&self, fingerprint: &str) -> Result<()> {
        if self.manifest.model_fingerprint != fingerprint {
            return Err(Error::Incompatible {
                expected: self.manifest.model_fingerprint.clone(),
                found: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(INDEX_MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)
            .map_err(|e| Error::io(&path, e))?;
        for (l, m) in self.layers.iter().enumerate() {
            let layer_dir = layer_dir(dir, l);
            fs::create_dir_all(&layer_dir).map_err(|e| Error::io(&layer_dir, e))?;
            write_f32(&layer_dir.join("token.f32"), m.token.data().iter().copied())?;
            write_f32(&layer_dir.join("head.f32"), m.head.data().iter().copied())?;
            let norms = m.token_norms.iter().chain(&m.head_norms).map(|&v| v as f32);
            write_f32(&layer_dir.join("norms.f32"), norms)?;
        }
        Ok(())
    }

    /// Loads an index and checks it belongs to the model with `fingerprint`.
    pub fn load(dir: &Path, fingerprint: &str) -> Result<Self> {
        let path = dir.join(INDEX_MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: IndexManifest = serde_json::from_slice(&bytes)?;
        if manifest.format != FORMAT {
            return Err(Error::Integrity {
                path,
                message: format!("unknown index format {:?}", manifest.format),
            });
        }
        let n = manifest.n_search;
        let head_width = manifest.num_heads * manifest.d_head;
        let mut layers = Vec::with_capacity(manifest.num_layers);
        for l in 0..manifest.num_layers {
            let layer_dir = layer_dir(dir, l);
            let token = read_f32(&layer_dir.join("token.f32"), n * manifest.d_model)?;
            let head = read_f32(&layer_dir.join("head.f32"), n * head_width)?;
            let norms_path = layer_dir.join("norms.f32");
            let norms = read_f32(&norms_path, 2 * n)?;
            let m = LayerMatrices::new(
                Matrix::new(n, manifest.d_model, token)?,
                Matrix::new(n, head_width, head)?,
            )?;
            let recomputed = m.token_norms.iter().chain(&m.head_norms);
            for (i, (&stored, &actual)) in norms.iter().zip(recomputed).enumerate() {
                if stored != actual as f32 {
                    return Err(Error::Integrity {
                        path: norms_path,
                        message: format!("norm {i} is {stored}, rows give {actual}"),
                    });
                }
            }
            layers.push(m);
        }
        let index = Self::new(manifest, layers)?;
        index.check_model(fingerprint)?;
        Ok(index)
    }
}

fn layer_dir(dir: &Path, l: usize) -> PathBuf {
    dir.join("layers").join(l.to_string())
}

fn write_f32(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.flat_map(f32::to_le_bytes).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            message: format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Embeddings of one sentence's searchable tokens: `[layer] -> (token rows, head rows)`.
type SentenceRows = Vec<(Vec<f32>, Vec<f32>)>;

/// Runs the model over every corpus sentence (unmasked) and stores token and
/// head embeddings of each searchable token at every layer.
pub fn build_index(corpus: &AnnotatedCorpus, model: &Model) -> Result<EmbeddingIndex> {
    if corpus.num_searchable() == 0 {
        return Err(Error::Build("empty corpus".into()));
    }
    let vocab = model.vocab();
    for tok in &corpus.tokens {
        if vocab.token(tok.token_id) != Some(tok.token.as_str()) {
            return Err(Error::Build(format!(
                "vocabulary mismatch: corpus token {} is {:?} but model id {} is {:?}",
                tok.global_id,
                tok.token,
                tok.token_id,
                vocab.token(tok.token_id)
            )));
        }
    }
    let config = model.config();
    let num_layers = config.num_layers;

    let per_sentence: Vec<SentenceRows> = (0..corpus.num_sentences())
        .into_par_iter()
        .map(|s| -> Result<SentenceRows> {
            let input = corpus.sentence_input(s).expect("sentence id in range");
            let trace = model.forward(&input)?;
            let positions: Vec<usize> = corpus
                .sentence_tokens(s)
                .expect("sentence id in range")
                .iter()
                .filter(|t| t.searchable)
                .map(|t| t.position)
                .collect();
            (0..num_layers)
                .map(|l| {
                    let mut token_rows = Vec::new();
                    let mut head_rows = Vec::new();
                    for &p in &positions {
                        token_rows.extend(token_embedding(&trace, l, p)?.iter().map(|&v| v as f32));
                        head_rows.extend(head_embedding(&trace, l, p)?.iter().map(|&v| v as f32));
                    }
                    Ok((token_rows, head_rows))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let row_ids: Vec<usize> = corpus.searchable().map(|t| t.global_id).collect();
    let n = row_ids.len();
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let mut token = Vec::with_capacity(n * config.d_model);
        let mut head = Vec::with_capacity(n * config.head_embedding_dim());
        for rows in &per_sentence {
            token.extend_from_slice(&rows[l].0);
            head.extend_from_slice(&rows[l].1);
        }
        layers.push(LayerMatrices::new(
            Matrix::new(n, config.d_model, token)?,
            Matrix::new(n, config.head_embedding_dim(), head)?,
        )?);
    }
    let manifest = IndexManifest::new(
        model.fingerprint().to_string(),
        num_layers,
        config.num_heads,
        config.d_model,
        config.d_head,
        row_ids,
    );
    EmbeddingIndex::new(manifest, layers)
}
