use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EmbeddingIndex;
use crate::error::{Error, Result};

/// Number of hits when the caller does not ask for a specific count.
pub const DEFAULT_K: usize = 50;

/// Row count above which scoring fans out over the rayon pool.
const PARALLEL_ROWS: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SearchKind {
    #[default]
    Token,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchQuery {
    pub vector: Vec<f64>,
    pub layer: usize,
    pub kind: SearchKind,
    /// Heads kept in a HEAD query; `None` keeps all of them.
    pub head_subset: Option<BTreeSet<usize>>,
    pub k: usize,
}

impl SearchQuery {
    pub fn token(vector: Vec<f64>, layer: usize) -> Self {
        Self {
            vector,
            layer,
            kind: SearchKind::Token,
            head_subset: None,
            k: DEFAULT_K,
        }
    }

    pub fn head(vector: Vec<f64>, layer: usize, heads: Option<BTreeSet<usize>>) -> Self {
        Self {
            vector,
            layer,
            kind: SearchKind::Head,
            head_subset: heads,
            k: DEFAULT_K,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub global_id: usize,
    /// Row of the index matrix the hit came from.
    pub row: usize,
    pub similarity: f64,
    /// 1-based.
    pub rank: usize,
}

/// Zeroes every `d_head`-wide segment of a head embedding whose head is not
/// in `heads`.
pub fn mask_query_heads(
    embedding: &[f64],
    heads: &BTreeSet<usize>,
    d_head: usize,
) -> Result<Vec<f64>> {
    if heads.is_empty() {
        return Err(Error::EmptySelection("head subset"));
    }
    if d_head == 0 || !embedding.len().is_multiple_of(d_head) {
        return Err(Error::Dimension(format!(
            "head embedding of width {} does not split into segments of {d_head}",
            embedding.len()
        )));
    }
    let n = embedding.len() / d_head;
    if let Some(&h) = heads.iter().find(|&&h| h >= n) {
        return Err(Error::Bounds {
            what: "head",
            index: h,
            limit: n,
        });
    }
    Ok(embedding
        .chunks(d_head)
        .enumerate()
        .flat_map(|(h, seg)| {
            let keep = heads.contains(&h);
            seg.iter().map(move |&v| if keep { v } else { 0.0 })
        })
        .collect())
}

fn dot(query: &[f64], row: &[f32]) -> f64 {
    query.iter().zip(row).map(|(&q, &r)| q * r as f64).sum()
}

/// Orders hits by similarity descending, then global id ascending.
fn rank_order(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exact cosine top-k over one `(layer, kind)` matrix.
pub fn search(index: &EmbeddingIndex, query: &SearchQuery) -> Result<Vec<SearchHit>> {
    if query.k == 0 {
        return Err(Error::Query("k must be at least 1".into()));
    }
    let layer = index.layer(query.layer)?;
    let (matrix, norms) = match query.kind {
        SearchKind::Token => (&layer.token, &layer.token_norms),
        SearchKind::Head => (&layer.head, &layer.head_norms),
    };
    if query.vector.len() != matrix.cols() {
        return Err(Error::Query(format!(
            "query width {} does not match the {:?} matrix width {}",
            query.vector.len(),
            query.kind,
            matrix.cols()
        )));
    }
    let masked;
    let vector: &[f64] = match (query.kind, &query.head_subset) {
        (SearchKind::Head, Some(heads)) => {
            masked = mask_query_heads(&query.vector, heads, index.manifest().d_head)?;
            &masked
        }
        _ => &query.vector,
    };
    let query_norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if query_norm == 0.0 || !query_norm.is_finite() {
        return Err(Error::DegenerateQuery);
    }

    let row_ids = index.row_ids();
    let score = |r: usize| -> Option<(f64, usize, usize)> {
        let norm = norms[r];
        if norm == 0.0 {
            return None;
        }
        let sim = (dot(vector, matrix.row(r)) / (query_norm * norm)).clamp(-1.0, 1.0);
        Some((sim, row_ids[r], r))
    };
    let mut scored: Vec<(f64, usize, usize)> = if matrix.rows() >= PARALLEL_ROWS {
        (0..matrix.rows())
            .into_par_iter()
            .filter_map(score)
            .collect()
    } else {
        (0..matrix.rows()).filter_map(score).collect()
    };

    let k = query.k.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_unstable_by(rank_order);
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (similarity, global_id, row))| SearchHit {
            global_id,
            row,
            similarity,
            rank: i + 1,
        })
        .collect())
}
