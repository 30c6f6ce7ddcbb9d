//! Annotated reference corpus: CoNLL-U sentences tokenized with the model
//! vocabulary, with word-level metadata copied onto every subword.

pub mod conllu;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use conllu::{parse_conllu, AnnotatedSentence, AnnotatedWord};

use crate::error::{Error, Result};
use crate::model::tokenizer::{word_pieces, TokenizedInput};
use crate::model::Vocabulary;

pub const CORPUS_FILE: &str = "corpus.json";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenMeta {
    pub upos: String,
    pub deprel: String,
    pub ner: String,
}

impl From<&AnnotatedWord> for TokenMeta {
    fn from(w: &AnnotatedWord) -> Self {
        Self {
            upos: w.upos.clone(),
            deprel: w.deprel.clone(),
            ner: w.ner.clone(),
        }
    }
}

/// Which annotation channel to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetaField {
    Pos,
    Dep,
    Ner,
}

impl MetaField {
    pub const ALL: [MetaField; 3] = [MetaField::Pos, MetaField::Dep, MetaField::Ner];
}

impl TokenMeta {
    pub fn get(&self, field: MetaField) -> &str {
        match field {
            MetaField::Pos => &self.upos,
            MetaField::Dep => &self.deprel,
            MetaField::Ner => &self.ner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusToken {
    pub global_id: usize,
    pub sentence_id: usize,
    /// Subword position within the framed sentence (`[CLS]` is 0).
    pub position: usize,
    pub token: String,
    pub token_id: u32,
    /// Source word; `None` for `[CLS]`/`[SEP]`.
    pub word_index: Option<usize>,
    pub meta: Option<TokenMeta>,
    pub searchable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub upos: BTreeMap<String, usize>,
    pub deprel: BTreeMap<String, usize>,
    pub ner: BTreeMap<String, usize>,
}

impl LabelCounts {
    pub fn field(&self, field: MetaField) -> &BTreeMap<String, usize> {
        match field {
            MetaField::Pos => &self.upos,
            MetaField::Dep => &self.deprel,
            MetaField::Ner => &self.ner,
        }
    }

    fn field_mut(&mut self, field: MetaField) -> &mut BTreeMap<String, usize> {
        match field {
            MetaField::Pos => &mut self.upos,
            MetaField::Dep => &mut self.deprel,
            MetaField::Ner => &mut self.ner,
        }
    }

    /// Counts labels over the searchable tokens.
    pub fn tally<'a>(tokens: impl IntoIterator<Item = &'a CorpusToken>) -> Self {
        let mut counts = Self::default();
        for meta in tokens
            .into_iter()
            .filter(|t| t.searchable)
            .filter_map(|t| t.meta.as_ref())
        {
            for field in MetaField::ALL {
                *counts
                    .field_mut(field)
                    .entry(meta.get(field).to_string())
                    .or_default() += 1;
            }
        }
        counts
    }
}

/// Subword tokens of one sentence, framed by `[CLS]`/`[SEP]`. Every subword
/// inherits its word's metadata; the frame tokens are not searchable.
/// Global ids are left at 0 for [`build_corpus`] to assign.
pub fn align_subtokens(
    sentence: &AnnotatedSentence,
    vocab: &Vocabulary,
    max_positions: usize,
) -> Result<Vec<CorpusToken>> {
    let pieces = sentence.words.iter().flat_map(|w| {
        word_pieces(&w.form, vocab)
            .into_iter()
            .map(move |id| (id, w.word_index))
    });
    let input = TokenizedInput::from_pieces(pieces, vocab, max_positions)?;
    Ok(input
        .ids
        .iter()
        .zip(&input.word_alignment)
        .enumerate()
        .map(|(position, (&token_id, &word_index))| {
            let meta = word_index.map(|w| TokenMeta::from(&sentence.words[w]));
            CorpusToken {
                global_id: 0,
                sentence_id: sentence.sentence_id,
                position,
                token: vocab.token(token_id).unwrap_or_default().to_string(),
                token_id,
                word_index,
                searchable: meta.is_some() && !vocab.is_structural(token_id),
                meta,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedCorpus {
    pub sentences: Vec<AnnotatedSentence>,
    pub tokens: Vec<CorpusToken>,
    pub label_counts: LabelCounts,
    /// Index into `tokens` of each sentence's `[CLS]`, plus a final end marker.
    sentence_offsets: Vec<usize>,
}

/// Tokenizes and aligns every sentence into one corpus. Sentences that do
/// not fit in `max_positions` are skipped with a warning; kept sentences are
/// renumbered densely from 0.
pub fn build_corpus(
    sentences: impl IntoIterator<Item = AnnotatedSentence>,
    vocab: &Vocabulary,
    max_positions: usize,
) -> AnnotatedCorpus {
    let mut kept = Vec::new();
    let mut tokens = Vec::new();
    let mut sentence_offsets = vec![0];
    for mut sentence in sentences {
        let sentence_id = kept.len();
        sentence.sentence_id = sentence_id;
        match align_subtokens(&sentence, vocab, max_positions) {
            Ok(aligned) => {
                for mut tok in aligned {
                    tok.global_id = tokens.len();
                    tokens.push(tok);
                }
                sentence_offsets.push(tokens.len());
                kept.push(sentence);
            }
            Err(e) => log::warn!("skipping sentence {:?}: {e}", sentence.raw_text),
        }
    }
    let label_counts = LabelCounts::tally(&tokens);
    AnnotatedCorpus {
        sentences: kept,
        tokens,
        label_counts,
        sentence_offsets,
    }
}

impl AnnotatedCorpus {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn sentence(&self, sentence_id: usize) -> Option<&AnnotatedSentence> {
        self.sentences.get(sentence_id)
    }

    /// All tokens of a sentence, frame included, in position order.
    pub fn sentence_tokens(&self, sentence_id: usize) -> Option<&[CorpusToken]> {
        let start = *self.sentence_offsets.get(sentence_id)?;
        let end = *self.sentence_offsets.get(sentence_id + 1)?;
        Some(&self.tokens[start..end])
    }

    pub fn token(&self, global_id: usize) -> Option<&CorpusToken> {
        self.tokens.get(global_id)
    }

    pub fn searchable(&self) -> impl Iterator<Item = &CorpusToken> {
        self.tokens.iter().filter(|t| t.searchable)
    }

    pub fn num_searchable(&self) -> usize {
        self.searchable().count()
    }

    /// Model input for a corpus sentence, rebuilt from its stored token ids.
    pub fn sentence_input(&self, sentence_id: usize) -> Option<TokenizedInput> {
        let toks = self.sentence_tokens(sentence_id)?;
        Some(TokenizedInput {
            ids: toks.iter().map(|t| t.token_id).collect(),
            word_alignment: toks.iter().map(|t| t.word_index).collect(),
            mask_positions: Default::default(),
        })
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Consistency(m));
        for (i, t) in self.tokens.iter().enumerate() {
            if t.global_id != i {
                return bad(format!("token {i} carries global id {}", t.global_id));
            }
        }
        if self.sentence_offsets.len() != self.sentences.len() + 1
            || self.sentence_offsets.last() != Some(&self.tokens.len())
        {
            return bad("sentence offsets do not cover the token list".into());
        }
        for (i, s) in self.sentences.iter().enumerate() {
            if s.sentence_id != i {
                return bad(format!("sentence {i} carries id {}", s.sentence_id));
            }
            let toks = self.sentence_tokens(i).unwrap_or_default();
            if toks.iter().any(|t| t.sentence_id != i) {
                return bad(format!("sentence {i} owns tokens of another sentence"));
            }
            if toks
                .iter()
                .filter_map(|t| t.word_index)
                .any(|w| w >= s.words.len())
            {
                return bad(format!("sentence {i} has a token pointing past its words"));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CORPUS_FILE);
        let bytes = serde_json::to_vec(self)?;
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(CORPUS_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let corpus: Self = serde_json::from_slice(&bytes)?;
        corpus.check()?;
        Ok(corpus)
    }
}
