//! Post-norm BERT encoder with full activation capture.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::config::ModelConfig;
use super::tokenizer::TokenizedInput;
use super::weights::{names, WeightSet};
use crate::error::{Error, Result};

/// Everything one forward pass produced for one input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub ids: Vec<u32>,
    /// Normalized embedding output; the input to layer 0. `[T x d_model]`
    pub embeddings: Array2<f64>,
    pub layers: Vec<LayerTrace>,
    /// `[T x V]`
    pub mlm_logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Softmax attention per head. `[n x T x T]`, indexed `[head][query][key]`.
    pub attention: Array3<f64>,
    /// Per-head context before the output projection. `[T x n x d_head]`
    pub head_contexts: Array3<f64>,
    /// Block output after both residual + norm steps. `[T x d_model]`
    pub hidden: Array2<f64>,
}

impl ForwardTrace {
    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_heads(&self) -> usize {
        self.layers.first().map_or(0, |l| l.attention.dim().0)
    }

    pub fn is_finite(&self) -> bool {
        let finite = |v: &f64| v.is_finite();
        self.embeddings.iter().all(finite)
            && self.mlm_logits.iter().all(finite)
            && self.layers.iter().all(|l| {
                l.attention.iter().all(finite)
                    && l.head_contexts.iter().all(finite)
                    && l.hidden.iter().all(finite)
            })
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[in x out]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

impl LayerNorm {
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attention_output: Linear,
    pub attention_norm: LayerNorm,
    pub ffn_inner: Linear,
    pub ffn_outer: Linear,
    pub ffn_norm: LayerNorm,
}

/// Output of one multi-head self-attention sublayer.
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub attention: Array3<f64>,
    pub head_contexts: Array3<f64>,
    /// Concatenated contexts after the output projection (before residual).
    pub projected: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: ModelConfig,
    word_embeddings: Array2<f64>,
    position_embeddings: Array2<f64>,
    token_type: Option<Array1<f64>>,
    embedding_norm: LayerNorm,
    blocks: Vec<EncoderBlock>,
    mlm_transform: Linear,
    mlm_norm: LayerNorm,
    mlm_decoder: Linear,
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-softmax of `Q K^T / sqrt(d_head)`, then the weighted sum of `V`.
/// Returns `(weights [T x T], context [T x d_head])`.
pub fn scaled_dot_attention(
    queries: ArrayView2<f64>,
    keys: ArrayView2<f64>,
    values: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (t, d) = queries.dim();
    if keys.dim() != (t, d) || values.nrows() != t {
        return Err(Error::Dimension(format!(
            "queries {:?}, keys {:?}, values {:?}",
            queries.dim(),
            keys.dim(),
            values.dim()
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let scores = queries.dot(&keys.t()) * scale;
    let mut weights = scores.as_standard_layout().into_owned();
    for mut row in weights.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    let context = weights.dot(&values);
    Ok((weights, context))
}

/// Single attention head over `y` with bias-free projections
/// `w_q`, `w_k`, `w_v` of shape `[d_model x d_head]`.
pub fn attention_head(
    y: ArrayView2<f64>,
    w_q: ArrayView2<f64>,
    w_k: ArrayView2<f64>,
    w_v: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d_model = y.ncols();
    for (name, rows) in [
        ("W_q", w_q.nrows()),
        ("W_k", w_k.nrows()),
        ("W_v", w_v.nrows()),
    ] {
        if rows != d_model {
            return Err(Error::Dimension(format!(
                "{name} has {rows} rows, input width is {d_model}"
            )));
        }
    }
    if w_q.ncols() != w_k.ncols() {
        return Err(Error::Dimension("W_q and W_k widths differ".into()));
    }
    scaled_dot_attention(y.dot(&w_q).view(), y.dot(&w_k).view(), y.dot(&w_v).view())
}

fn matrix(weights: &WeightSet, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let t = weights.expect(name, &[rows, cols])?;
    Ok(
        Array2::from_shape_vec((rows, cols), t.data.iter().map(|&v| v as f64).collect())
            .expect("shape checked"),
    )
}

fn vector(weights: &WeightSet, name: &str, len: usize) -> Result<Array1<f64>> {
    let t = weights.expect(name, &[len])?;
    Ok(t.data.iter().map(|&v| v as f64).collect())
}

fn linear(weights: &WeightSet, base: &str, i: usize, o: usize) -> Result<Linear> {
    Ok(Linear {
        weight: matrix(weights, &format!("{base}.weight"), i, o)?,
        bias: vector(weights, &format!("{base}.bias"), o)?,
    })
}

fn layer_norm(weights: &WeightSet, base: &str, d: usize, eps: f64) -> Result<LayerNorm> {
    Ok(LayerNorm {
        gamma: vector(weights, &format!("{base}.weight"), d)?,
        beta: vector(weights, &format!("{base}.bias"), d)?,
        eps,
    })
}

impl Encoder {
    pub fn new(config: ModelConfig, weights: &WeightSet) -> Result<Self> {
        config.validate()?;
        weights.validate(&config)?;
        let d = config.d_model;
        let eps = config.layernorm_eps;
        let word_embeddings = matrix(weights, names::WORD_EMBEDDINGS, config.vocab_size, d)?;
        let position_embeddings =
            matrix(weights, names::POSITION_EMBEDDINGS, config.max_positions, d)?;
        let token_type = weights
            .get(names::TOKEN_TYPE_EMBEDDINGS)
            .map(|t| t.data[..d].iter().map(|&v| v as f64).collect());
        let embedding_norm = LayerNorm {
            gamma: vector(weights, names::EMBEDDING_NORM_WEIGHT, d)?,
            beta: vector(weights, names::EMBEDDING_NORM_BIAS, d)?,
            eps,
        };
        let mut blocks = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let base = |s: &str| names::layer(l, s);
            blocks.push(EncoderBlock {
                query: linear(weights, &base(names::QUERY), d, d)?,
                key: linear(weights, &base(names::KEY), d, d)?,
                value: linear(weights, &base(names::VALUE), d, d)?,
                attention_output: linear(weights, &base(names::ATTENTION_OUTPUT), d, d)?,
                attention_norm: layer_norm(weights, &base(names::ATTENTION_NORM), d, eps)?,
                ffn_inner: linear(weights, &base(names::FFN_INNER), d, config.ffn_dim)?,
                ffn_outer: linear(weights, &base(names::FFN_OUTER), config.ffn_dim, d)?,
                ffn_norm: layer_norm(weights, &base(names::FFN_NORM), d, eps)?,
            });
        }
        let mlm_transform = Linear {
            weight: matrix(weights, names::MLM_TRANSFORM_WEIGHT, d, d)?,
            bias: vector(weights, names::MLM_TRANSFORM_BIAS, d)?,
        };
        let mlm_norm = LayerNorm {
            gamma: vector(weights, names::MLM_NORM_WEIGHT, d)?,
            beta: vector(weights, names::MLM_NORM_BIAS, d)?,
            eps,
        };
        let decoder_weight = match weights.get(names::MLM_DECODER_WEIGHT) {
            Some(_) => matrix(weights, names::MLM_DECODER_WEIGHT, d, config.vocab_size)?,
            None => word_embeddings.t().to_owned(),
        };
        let mlm_decoder = Linear {
            weight: decoder_weight,
            bias: vector(weights, names::MLM_DECODER_BIAS, config.vocab_size)?,
        };
        Ok(Self {
            config,
            word_embeddings,
            position_embeddings,
            token_type,
            embedding_norm,
            blocks,
            mlm_transform,
            mlm_norm,
            mlm_decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[EncoderBlock] {
        &self.blocks
    }

    fn check_input(&self, ids: &[u32]) -> Result<()> {
        if ids.len() > self.config.max_positions {
            return Err(Error::Length {
                len: ids.len(),
                limit: self.config.max_positions,
            });
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput("token sequence"));
        }
        if let Some(&bad) = ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(Error::Bounds {
                what: "token id",
                index: bad as usize,
                limit: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Sum of token, position and token-type embeddings, before the norm.
    pub fn embedding_input(&self, ids: &[u32]) -> Result<Array2<f64>> {
        self.check_input(ids)?;
        let t = ids.len();
        let mut x = Array2::zeros((t, self.config.d_model));
        for (p, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(p);
            row += &self.word_embeddings.row(id as usize);
            row += &self.position_embeddings.row(p);
            if let Some(tt) = &self.token_type {
                row += tt;
            }
        }
        Ok(x)
    }

    /// Multi-head self-attention of one block over its input `y`.
    pub fn self_attention(
        &self,
        block: &EncoderBlock,
        y: ArrayView2<f64>,
    ) -> Result<AttentionOutput> {
        let n = self.config.num_heads;
        let dh = self.config.d_head;
        let t = y.nrows();
        if y.ncols() != self.config.d_model {
            return Err(Error::Dimension(format!(
                "input width {} does not match d_model {}",
                y.ncols(),
                self.config.d_model
            )));
        }
        let q = block.query.forward(y);
        let k = block.key.forward(y);
        let v = block.value.forward(y);
        let mut attention = Array3::zeros((n, t, t));
        let mut head_contexts = Array3::zeros((t, n, dh));
        for h in 0..n {
            let cols = s![.., h * dh..(h + 1) * dh];
            let (w, ctx) = scaled_dot_attention(q.slice(cols), k.slice(cols), v.slice(cols))?;
            attention.index_axis_mut(Axis(0), h).assign(&w);
            head_contexts.slice_mut(s![.., h, ..]).assign(&ctx);
        }
        let concat = head_contexts
            .to_shape((t, n * dh))
            .expect("contiguous head contexts")
            .to_owned();
        let projected = block.attention_output.forward(concat.view());
        Ok(AttentionOutput {
            attention,
            head_contexts,
            projected,
        })
    }

    fn block_forward(&self, block: &EncoderBlock, x: ArrayView2<f64>) -> Result<LayerTrace> {
        let attn = self.self_attention(block, x)?;
        let after_attention = block.attention_norm.forward((&x + &attn.projected).view());
        let mut inner = block.ffn_inner.forward(after_attention.view());
        inner.mapv_inplace(gelu);
        let ffn = block.ffn_outer.forward(inner.view());
        let hidden = block.ffn_norm.forward((&after_attention + &ffn).view());
        Ok(LayerTrace {
            attention: attn.attention,
            head_contexts: attn.head_contexts,
            hidden,
        })
    }

    /// Runs the full encoder and captures every intermediate the tooling
    /// exposes. Pure: the same input always yields a bit-identical trace.
    pub fn forward(&self, input: &TokenizedInput) -> Result<ForwardTrace> {
        let x = self.embedding_input(&input.ids)?;
        let embeddings = self.embedding_norm.forward(x.view());
        let mut layers = Vec::with_capacity(self.blocks.len());
        let mut current = embeddings.clone();
        for block in &self.blocks {
            let layer = self.block_forward(block, current.view())?;
            current = layer.hidden.clone();
            layers.push(layer);
        }
        let mut transformed = self.mlm_transform.forward(current.view());
        transformed.mapv_inplace(gelu);
        let transformed = self.mlm_norm.forward(transformed.view());
        let mlm_logits = self.mlm_decoder.forward(transformed.view());
        Ok(ForwardTrace {
            ids: input.ids.clone(),
            embeddings,
            layers,
            mlm_logits,
        })
    }
}
