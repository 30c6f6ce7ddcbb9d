//! Corpus-view match details and summary histograms.

pub mod cache;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::TraceCache;

use crate::corpus::{AnnotatedCorpus, MetaField, TokenMeta};
use crate::error::{Error, Result};
use crate::index::{search, EmbeddingIndex, SearchHit, SearchQuery};
use crate::model::{
    aggregate_attention, max_attention_target, token_embedding, ForwardTrace, Model,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SummaryField {
    Pos,
    Dep,
    Ner,
    Offset,
}

impl SummaryField {
    fn meta_field(self) -> Option<MetaField> {
        match self {
            SummaryField::Pos => Some(MetaField::Pos),
            SummaryField::Dep => Some(MetaField::Dep),
            SummaryField::Ner => Some(MetaField::Ner),
            SummaryField::Offset => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextToken {
    pub position: usize,
    pub token: String,
    pub is_special: bool,
    pub metadata: Option<TokenMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAttention {
    pub position: usize,
    /// `position - match position`: 0 is self, +1 the following token.
    pub offset: i64,
    pub token: String,
    pub metadata: Option<TokenMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDetail {
    #[serde(flatten)]
    pub hit: SearchHit,
    pub token: String,
    pub sentence_id: usize,
    pub position: usize,
    pub metadata: Option<TokenMeta>,
    /// The whole matched sentence, frame tokens included.
    pub context: Vec<ContextToken>,
    pub max_attention: MaxAttention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bar {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramSummary {
    pub field: SummaryField,
    pub total: usize,
    pub bars: Vec<Bar>,
}

impl HistogramSummary {
    pub fn count(&self, label: &str) -> usize {
        self.bars
            .iter()
            .find(|b| b.label == label)
            .map_or(0, |b| b.count)
    }

    /// Bars sorted by count descending, then label ascending.
    fn from_labels(field: SummaryField, labels: impl IntoIterator<Item = String>) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0;
        for label in labels {
            *counts.entry(label).or_default() += 1;
            total += 1;
        }
        let mut bars: Vec<Bar> = counts
            .into_iter()
            .map(|(label, count)| Bar { label, count })
            .collect();
        bars.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
        Self { field, total, bars }
    }
}

fn meta_label(meta: Option<&TokenMeta>, token: &str, field: MetaField) -> String {
    meta.map_or_else(|| token.to_string(), |m| m.get(field).to_string())
}

pub(crate) fn matched_histogram(
    details: &[MatchDetail],
    field: SummaryField,
) -> Result<HistogramSummary> {
    let meta_field = field
        .meta_field()
        .ok_or_else(|| Error::Query("OFFSET is only defined for max-attention targets".into()))?;
    Ok(HistogramSummary::from_labels(
        field,
        details
            .iter()
            .map(|d| meta_label(d.metadata.as_ref(), &d.token, meta_field)),
    ))
}

pub(crate) fn max_attention_histogram(
    details: &[MatchDetail],
    field: SummaryField,
) -> HistogramSummary {
    let labels = details.iter().map(|d| match field.meta_field() {
        Some(f) => meta_label(d.max_attention.metadata.as_ref(), &d.max_attention.token, f),
        None => d.max_attention.offset.to_string(),
    });
    HistogramSummary::from_labels(field, labels)
}

/// Histogram of the matched tokens' metadata.
pub fn summarize_matches(details: &[MatchDetail], field: SummaryField) -> Result<HistogramSummary> {
    if details.is_empty() {
        return Err(Error::EmptyInput("no matches to summarize"));
    }
    matched_histogram(details, field)
}

/// Histogram over the tokens each match attends to most. OFFSET labels are
/// the signed offsets.
pub fn summarize_max_attention(
    details: &[MatchDetail],
    field: SummaryField,
) -> Result<HistogramSummary> {
    if details.is_empty() {
        return Err(Error::EmptyInput("no matches to summarize"));
    }
    Ok(max_attention_histogram(details, field))
}

/// Model, corpus and index bundled for searching and summarizing.
#[derive(Debug)]
pub struct Explorer {
    model: Arc<Model>,
    corpus: Arc<AnnotatedCorpus>,
    index: Arc<EmbeddingIndex>,
    cache: TraceCache,
}

impl Explorer {
    pub fn new(
        model: Arc<Model>,
        corpus: Arc<AnnotatedCorpus>,
        index: Arc<EmbeddingIndex>,
    ) -> Result<Self> {
        Self::with_cache(model, corpus, index, TraceCache::default())
    }

    pub fn with_cache(
        model: Arc<Model>,
        corpus: Arc<AnnotatedCorpus>,
        index: Arc<EmbeddingIndex>,
        cache: TraceCache,
    ) -> Result<Self> {
        index.check_model(model.fingerprint())?;
        let searchable: Vec<usize> = corpus.searchable().map(|t| t.global_id).collect();
        if searchable != index.row_ids() {
            return Err(Error::Consistency(
                "index rows do not match the corpus searchable tokens".into(),
            ));
        }
        Ok(Self {
            model,
            corpus,
            index,
            cache,
        })
    }

    /// Opens `corpus.json` and the index matrices from an index directory.
    pub fn open(index_dir: &Path, model: Arc<Model>) -> Result<Self> {
        let index = EmbeddingIndex::load(index_dir, model.fingerprint())?;
        let corpus = AnnotatedCorpus::load(index_dir)?;
        Self::new(model, Arc::new(corpus), Arc::new(index))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn corpus(&self) -> &AnnotatedCorpus {
        &self.corpus
    }

    pub fn index(&self) -> &EmbeddingIndex {
        &self.index
    }

    pub fn cache(&self) -> &TraceCache {
        &self.cache
    }

    /// Unmasked trace of a corpus sentence, through the cache.
    pub fn sentence_trace(&self, sentence_id: usize) -> Result<Arc<ForwardTrace>> {
        let input = self
            .corpus
            .sentence_input(sentence_id)
            .ok_or(Error::Bounds {
                what: "sentence",
                index: sentence_id,
                limit: self.corpus.num_sentences(),
            })?;
        self.cache
            .get_or_compute(sentence_id, || self.model.forward(&input))
    }

    /// Context, metadata and max-attention target of every hit, using the
    /// attention of `heads` summed at `layer` over the hit's own sentence.
    pub fn match_details(
        &self,
        hits: &[SearchHit],
        layer: usize,
        heads: &BTreeSet<usize>,
        exclude_specials: bool,
    ) -> Result<Vec<MatchDetail>> {
        hits.iter()
            .map(|hit| self.match_detail(hit, layer, heads, exclude_specials))
            .collect()
    }

    fn match_detail(
        &self,
        hit: &SearchHit,
        layer: usize,
        heads: &BTreeSet<usize>,
        exclude_specials: bool,
    ) -> Result<MatchDetail> {
        let stale = || {
            Error::Consistency(format!(
                "hit {} does not refer to a searchable corpus token",
                hit.global_id
            ))
        };
        let token = self.corpus.token(hit.global_id).ok_or_else(stale)?;
        if !token.searchable || self.index.row_ids().get(hit.row) != Some(&hit.global_id) {
            return Err(stale());
        }
        let sentence = self
            .corpus
            .sentence_tokens(token.sentence_id)
            .ok_or_else(stale)?;
        let trace = self.sentence_trace(token.sentence_id)?;
        let agg = aggregate_attention(&trace, layer, heads)?;
        let specials: BTreeSet<usize> = sentence
            .iter()
            .filter(|t| t.word_index.is_none())
            .map(|t| t.position)
            .collect();
        let target = max_attention_target(&agg, token.position, exclude_specials, &specials)?;
        let target_tok = &sentence[target];
        Ok(MatchDetail {
            hit: hit.clone(),
            token: token.token.clone(),
            sentence_id: token.sentence_id,
            position: token.position,
            metadata: token.meta.clone(),
            context: sentence
                .iter()
                .map(|t| ContextToken {
                    position: t.position,
                    token: t.token.clone(),
                    is_special: t.word_index.is_none(),
                    metadata: t.meta.clone(),
                })
                .collect(),
            max_attention: MaxAttention {
                position: target,
                offset: target as i64 - token.position as i64,
                token: target_tok.token.clone(),
                metadata: target_tok.meta.clone(),
            },
        })
    }

    /// POS histogram of the token-embedding matches at every layer.
    pub fn layer_sweep(
        &self,
        sentence: &str,
        mask_positions: &BTreeSet<usize>,
        position: usize,
        k: usize,
    ) -> Result<Vec<HistogramSummary>> {
        let input = self.model.prepare(sentence, mask_positions)?;
        let trace = self.model.forward(&input)?;
        let heads = self.model.all_heads();
        (0..self.model.config().num_layers)
            .map(|layer| {
                let vector = token_embedding(&trace, layer, position)?.to_vec();
                let hits = search(&self.index, &SearchQuery::token(vector, layer).with_k(k))?;
                let details = self.match_details(&hits, layer, &heads, true)?;
                summarize_matches(&details, SummaryField::Pos)
            })
            .collect()
    }
}
