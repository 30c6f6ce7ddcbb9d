//! Request and response bodies shared by the HTTP service, the CLI and the
//! C ABI.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedWord, CorpusToken, MetaField};
use crate::error::{Error, Result};
use crate::index::{search, IndexManifest, SearchKind, SearchQuery, DEFAULT_K};
use crate::model::{head_embedding, mlm_topk, token_embedding, Model, ModelConfig, Prediction};
use crate::summarize::{
    matched_histogram, max_attention_histogram, Explorer, HistogramSummary, MatchDetail,
    SummaryField,
};

/// Predictions returned per masked position by `analyze`.
pub const ANALYZE_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub sentence: String,
    #[serde(default)]
    pub mask_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenInfo {
    pub text: String,
    pub is_special: bool,
    pub is_masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPredictions {
    pub position: usize,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeResponse {
    pub tokens: Vec<TokenInfo>,
    /// `[layer][head][query][key]`
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
    pub mlm_topk: Vec<MaskPredictions>,
}

fn require_sentence(sentence: &str) -> Result<()> {
    if sentence.trim().is_empty() {
        return Err(Error::EmptyInput("sentence"));
    }
    Ok(())
}

/// Tokenize, mask, run the encoder and report attention plus MLM guesses for
/// every masked position.
pub fn analyze(model: &Model, request: &AnalyzeRequest) -> Result<AnalyzeResponse> {
    require_sentence(&request.sentence)?;
    let mask: BTreeSet<usize> = request.mask_positions.iter().copied().collect();
    let input = model.prepare(&request.sentence, &mask)?;
    let trace = model.forward(&input)?;
    let tokens = input
        .token_strings(model.vocab())
        .into_iter()
        .enumerate()
        .map(|(p, text)| TokenInfo {
            text: text.to_string(),
            is_special: input.is_special_position(p),
            is_masked: input.mask_positions.contains(&p),
        })
        .collect();
    let attention = trace
        .layers
        .iter()
        .map(|l| {
            l.attention
                .outer_iter()
                .map(|head| head.outer_iter().map(|row| row.to_vec()).collect())
                .collect()
        })
        .collect();
    let mlm_topk = input
        .mask_positions
        .iter()
        .map(|&position| {
            Ok(MaskPredictions {
                position,
                predictions: mlm_topk(&trace, position, ANALYZE_TOP_K, model.vocab())?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AnalyzeResponse {
        tokens,
        attention,
        mlm_topk,
    })
}

fn default_exclude_specials() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub sentence: String,
    #[serde(default)]
    pub mask_positions: Vec<usize>,
    pub position: usize,
    pub layer: usize,
    #[serde(default)]
    pub kind: SearchKind,
    /// HEAD searches keep only these heads (all when absent). For both kinds
    /// the set also defines the max-attention aggregation.
    #[serde(default)]
    pub heads: Option<Vec<usize>>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_exclude_specials")]
    pub exclude_specials: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEcho {
    pub token: String,
    pub position: usize,
    pub layer: usize,
    pub kind: SearchKind,
    pub heads: Vec<usize>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub matched: Vec<HistogramSummary>,
    pub max_attention: Vec<HistogramSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub query: QueryEcho,
    pub hits: Vec<MatchDetail>,
    pub summaries: Summaries,
}

/// Parses a `0,3,9` style head list.
pub fn parse_heads(list: &str) -> std::result::Result<Vec<usize>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format!("invalid head index {s:?}"))
        })
        .collect()
}

/// Runs a search end to end: trace the query sentence, pick the embedding,
/// search, attach match details and build both summary families.
pub fn search_request(explorer: &Explorer, request: &SearchRequest) -> Result<SearchResponse> {
    let model = explorer.model();
    let config = model.config();
    require_sentence(&request.sentence)?;
    let mask: BTreeSet<usize> = request.mask_positions.iter().copied().collect();
    let input = model.prepare(&request.sentence, &mask)?;
    if request.position >= input.len() {
        return Err(Error::Bounds {
            what: "position",
            index: request.position,
            limit: input.len(),
        });
    }
    if request.layer >= config.num_layers {
        return Err(Error::Bounds {
            what: "layer",
            index: request.layer,
            limit: config.num_layers,
        });
    }
    let selected: Option<BTreeSet<usize>> =
        request.heads.as_ref().map(|h| h.iter().copied().collect());
    if let Some(h) = &selected {
        if let Some(&bad) = h.iter().find(|&&h| h >= config.num_heads) {
            return Err(Error::Bounds {
                what: "head",
                index: bad,
                limit: config.num_heads,
            });
        }
    }
    let heads = match (request.kind, selected) {
        (SearchKind::Head, Some(h)) if h.is_empty() => {
            return Err(Error::EmptySelection("head set for a HEAD search"))
        }
        (_, Some(h)) if !h.is_empty() => h,
        _ => model.all_heads(),
    };
    let k = request.k.unwrap_or(DEFAULT_K);

    let trace = model.forward(&input)?;
    let query = match request.kind {
        SearchKind::Token => SearchQuery::token(
            token_embedding(&trace, request.layer, request.position)?.to_vec(),
            request.layer,
        ),
        SearchKind::Head => SearchQuery::head(
            head_embedding(&trace, request.layer, request.position)?.to_vec(),
            request.layer,
            Some(heads.clone()),
        ),
    }
    .with_k(k);
    let hits = search(explorer.index(), &query)?;
    let details = explorer.match_details(&hits, request.layer, &heads, request.exclude_specials)?;

    let matched = MetaField::ALL
        .iter()
        .map(|&f| matched_histogram(&details, meta_summary_field(f)))
        .collect::<Result<_>>()?;
    let max_attention = [
        SummaryField::Pos,
        SummaryField::Dep,
        SummaryField::Ner,
        SummaryField::Offset,
    ]
    .into_iter()
    .map(|f| max_attention_histogram(&details, f))
    .collect();

    Ok(SearchResponse {
        query: QueryEcho {
            token: input.token_strings(model.vocab())[request.position].to_string(),
            position: request.position,
            layer: request.layer,
            kind: request.kind,
            heads: heads.into_iter().collect(),
            k,
        },
        hits: details,
        summaries: Summaries {
            matched,
            max_attention,
        },
    })
}

fn meta_summary_field(f: MetaField) -> SummaryField {
    match f {
        MetaField::Pos => SummaryField::Pos,
        MetaField::Dep => SummaryField::Dep,
        MetaField::Ner => SummaryField::Ner,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub tokens: usize,
    pub searchable: usize,
    /// Distinct labels per field, sorted.
    pub labels: BTreeMap<MetaField, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexInfo {
    pub format: String,
    pub model_fingerprint: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub n_search: usize,
}

impl From<&IndexManifest> for IndexInfo {
    fn from(m: &IndexManifest) -> Self {
        Self {
            format: m.format.clone(),
            model_fingerprint: m.model_fingerprint.clone(),
            num_layers: m.num_layers,
            num_heads: m.num_heads,
            d_model: m.d_model,
            d_head: m.d_head,
            n_search: m.n_search,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResponse {
    pub model: ModelConfig,
    pub model_fingerprint: String,
    pub corpus: CorpusStats,
    pub index: IndexInfo,
}

pub fn info(explorer: &Explorer) -> InfoResponse {
    let corpus = explorer.corpus();
    let labels = MetaField::ALL
        .iter()
        .map(|&f| (f, corpus.label_counts.field(f).keys().cloned().collect()))
        .collect();
    InfoResponse {
        model: explorer.model().config().clone(),
        model_fingerprint: explorer.model().fingerprint().to_string(),
        corpus: CorpusStats {
            sentences: corpus.num_sentences(),
            tokens: corpus.tokens.len(),
            searchable: corpus.num_searchable(),
            labels,
        },
        index: explorer.index().manifest().into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceResponse {
    pub sentence_id: usize,
    pub raw_text: String,
    pub words: Vec<AnnotatedWord>,
    pub tokens: Vec<CorpusToken>,
}

pub fn sentence(explorer: &Explorer, sentence_id: usize) -> Option<SentenceResponse> {
    let corpus = explorer.corpus();
    let s = corpus.sentence(sentence_id)?;
    Some(SentenceResponse {
        sentence_id,
        raw_text: s.raw_text.clone(),
        words: s.words.clone(),
        tokens: corpus.sentence_tokens(sentence_id)?.to_vec(),
    })
}
