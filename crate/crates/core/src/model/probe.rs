//! Read-only views over a [`ForwardTrace`].

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::encoder::{softmax_in_place, ForwardTrace};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Guard for normalizing zero vectors.
pub const NORM_EPS: f64 = 1e-12;

fn check_layer(trace: &ForwardTrace, layer: usize) -> Result<()> {
    if layer >= trace.num_layers() {
        return Err(Error::Bounds {
            what: "layer",
            index: layer,
            limit: trace.num_layers(),
        });
    }
    Ok(())
}

fn check_position(trace: &ForwardTrace, position: usize) -> Result<()> {
    if position >= trace.seq_len() {
        return Err(Error::Bounds {
            what: "position",
            index: position,
            limit: trace.seq_len(),
        });
    }
    Ok(())
}

/// Scales each `width`-wide segment of `v` to unit L2 norm; zero segments
/// stay zero.
pub fn normalize_segments(v: &mut [f64], width: usize) {
    for seg in v.chunks_mut(width) {
        let norm = seg.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = norm.max(NORM_EPS);
        for x in seg.iter_mut() {
            *x /= denom;
        }
    }
}

/// Concatenation over heads of the per-head contexts at `position`, each
/// normalized to unit length.
pub fn head_embedding(trace: &ForwardTrace, layer: usize, position: usize) -> Result<Array1<f64>> {
    check_layer(trace, layer)?;
    check_position(trace, position)?;
    let ctx = &trace.layers[layer].head_contexts;
    let d_head = ctx.dim().2;
    let mut v: Vec<f64> = ctx.index_axis(Axis(0), position).iter().copied().collect();
    normalize_segments(&mut v, d_head);
    Ok(Array1::from(v))
}

/// Hidden state at the output of block `layer`.
pub fn token_embedding(trace: &ForwardTrace, layer: usize, position: usize) -> Result<Array1<f64>> {
    check_layer(trace, layer)?;
    check_position(trace, position)?;
    Ok(trace.layers[layer].hidden.row(position).to_owned())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Prediction {
    pub token: String,
    pub token_id: u32,
    pub probability: f64,
}

/// The `k` most probable tokens at `position` under the MLM head, by
/// probability descending, ties by token id ascending.
pub fn mlm_topk(
    trace: &ForwardTrace,
    position: usize,
    k: usize,
    vocab: &Vocabulary,
) -> Result<Vec<Prediction>> {
    if k == 0 {
        return Err(Error::Query("k must be at least 1".into()));
    }
    check_position(trace, position)?;
    let mut probs: Vec<f64> = trace.mlm_logits.row(position).to_vec();
    softmax_in_place(&mut probs);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|id| Prediction {
            token: vocab
                .token(id as u32)
                .unwrap_or(super::vocab::UNK)
                .to_string(),
            token_id: id as u32,
            probability: probs[id],
        })
        .collect())
}

/// Elementwise sum of the attention maps of `heads` at `layer`.
pub fn aggregate_attention(
    trace: &ForwardTrace,
    layer: usize,
    heads: &BTreeSet<usize>,
) -> Result<Array2<f64>> {
    check_layer(trace, layer)?;
    if heads.is_empty() {
        return Err(Error::EmptySelection("head set"));
    }
    let attention = &trace.layers[layer].attention;
    let n = attention.dim().0;
    let t = trace.seq_len();
    let mut sum = Array2::zeros((t, t));
    for &h in heads {
        if h >= n {
            return Err(Error::Bounds {
                what: "head",
                index: h,
                limit: n,
            });
        }
        sum += &attention.index_axis(Axis(0), h);
    }
    Ok(sum)
}

/// Column of maximal weight in one attention row; lowest index wins ties.
pub fn argmax_row(
    row: ArrayView1<f64>,
    exclude_specials: bool,
    special_positions: &BTreeSet<usize>,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &w) in row.iter().enumerate() {
        if exclude_specials && special_positions.contains(&j) {
            continue;
        }
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((j, w));
        }
    }
    best.map(|(j, _)| j).ok_or(Error::NoCandidate)
}

/// Position receiving the most attention from `position` in `agg`.
pub fn max_attention_target(
    agg: &Array2<f64>,
    position: usize,
    exclude_specials: bool,
    special_positions: &BTreeSet<usize>,
) -> Result<usize> {
    if position >= agg.nrows() {
        return Err(Error::Bounds {
            what: "position",
            index: position,
            limit: agg.nrows(),
        });
    }
    argmax_row(agg.row(position), exclude_specials, special_positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encoder::LayerTrace;
    use ndarray::{array, Array3};

    fn trace_with_contexts(ctx: Array3<f64>) -> ForwardTrace {
        let (t, n, dh) = ctx.dim();
        ForwardTrace {
            ids: vec![0; t],
            embeddings: Array2::zeros((t, n * dh)),
            layers: vec![LayerTrace {
                attention: Array3::from_elem((n, t, t), 1.0 / t as f64),
                head_contexts: ctx,
                hidden: Array2::from_shape_fn((t, n * dh), |(i, j)| (i * 10 + j) as f64),
            }],
            mlm_logits: Array2::zeros((t, 3)),
        }
    }

    #[test]
    fn hand_normalized_head_embedding() {
        let ctx = Array3::from_shape_vec((1, 2, 1), vec![3.0, -4.0]).unwrap();
        let e = head_embedding(&trace_with_contexts(ctx), 0, 0).unwrap();
        assert_eq!(e.to_vec(), vec![1.0, -1.0]);
    }

    #[test]
    fn zero_segment_stays_zero() {
        let ctx = Array3::from_shape_vec((1, 2, 2), vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let e = head_embedding(&trace_with_contexts(ctx), 0, 0).unwrap();
        assert_eq!(e.to_vec(), vec![0.0, 0.0, 0.6, 0.8]);
    }

    #[test]
    fn out_of_range_is_bounds_error() {
        let tr = trace_with_contexts(Array3::ones((2, 1, 1)));
        assert!(matches!(
            head_embedding(&tr, 1, 0),
            Err(Error::Bounds { what: "layer", .. })
        ));
        assert!(matches!(
            token_embedding(&tr, 0, 2),
            Err(Error::Bounds {
                what: "position",
                ..
            })
        ));
    }

    #[test]
    fn token_embedding_is_hidden_row() {
        let tr = trace_with_contexts(Array3::ones((2, 1, 2)));
        assert_eq!(
            token_embedding(&tr, 0, 1).unwrap().to_vec(),
            vec![10.0, 11.0]
        );
    }

    #[test]
    fn mlm_hand_softmax() {
        let vocab =
            Vocabulary::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]).unwrap();
        let mut tr = trace_with_contexts(Array3::ones((1, 1, 1)));
        tr.mlm_logits = array![[1.0, 0.0, 0.0]];
        let top = mlm_topk(&tr, 0, 1, &vocab).unwrap();
        let e = std::f64::consts::E;
        assert_eq!(top[0].token_id, 0);
        assert!((top[0].probability - e / (e + 2.0)).abs() < 1e-12);
        let all = mlm_topk(&tr, 0, 3, &vocab).unwrap();
        assert_eq!(all[1].token_id, 1, "ties break by lower id");
        assert!((all.iter().map(|p| p.probability).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(mlm_topk(&tr, 0, 0, &vocab).is_err());
    }

    #[test]
    fn argmax_rules() {
        let none = BTreeSet::new();
        assert_eq!(
            argmax_row(array![0.1, 0.7, 0.2].view(), false, &none).unwrap(),
            1
        );
        assert_eq!(
            argmax_row(array![0.5, 0.5].view(), false, &none).unwrap(),
            0
        );
        let specials = BTreeSet::from([0, 3]);
        assert_eq!(
            argmax_row(array![0.1, 0.2, 0.3, 0.4].view(), true, &specials).unwrap(),
            2
        );
        assert!(matches!(
            argmax_row(array![0.5, 0.5].view(), true, &BTreeSet::from([0, 1])),
            Err(Error::NoCandidate)
        ));
    }

    #[test]
    fn aggregate_requires_heads() {
        let tr = trace_with_contexts(Array3::ones((2, 2, 1)));
        assert!(matches!(
            aggregate_attention(&tr, 0, &BTreeSet::new()),
            Err(Error::EmptySelection(_))
        ));
        assert!(aggregate_attention(&tr, 0, &BTreeSet::from([2])).is_err());
        let agg = aggregate_attention(&tr, 0, &BTreeSet::from([0, 1])).unwrap();
        for row in agg.rows() {
            assert!((row.sum() - 2.0).abs() < 1e-12);
        }
    }
}
