//! Greedy longest-match subword tokenization with `##` continuations.
//!
//! Text is split on whitespace, punctuation characters become words of their
//! own, and each word is segmented against the vocabulary. A word that cannot
//! be fully segmented maps to a single `[UNK]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::vocab::{Vocabulary, CONTINUATION_PREFIX};
use crate::error::{Error, Result};

/// Words longer than this (in chars) map straight to `[UNK]`.
const MAX_WORD_CHARS: usize = 100;

/// A model-ready token sequence, framed by `[CLS]` ... `[SEP]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub ids: Vec<u32>,
    /// Source word of every token; `None` for `[CLS]`/`[SEP]`.
    pub word_alignment: Vec<Option<usize>>,
    pub mask_positions: BTreeSet<usize>,
}

impl TokenizedInput {
    /// Frames `(token id, word index)` pairs with `[CLS]`/`[SEP]`.
    pub fn from_pieces(
        pieces: impl IntoIterator<Item = (u32, usize)>,
        vocab: &Vocabulary,
        max_positions: usize,
    ) -> Result<Self> {
        let s = vocab.specials();
        let mut ids = vec![s.cls];
        let mut word_alignment = vec![None];
        for (id, word) in pieces {
            ids.push(id);
            word_alignment.push(Some(word));
        }
        ids.push(s.sep);
        word_alignment.push(None);
        if ids.len() > max_positions {
            return Err(Error::Length {
                len: ids.len(),
                limit: max_positions,
            });
        }
        Ok(Self {
            ids,
            word_alignment,
            mask_positions: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn is_special_position(&self, position: usize) -> bool {
        self.word_alignment
            .get(position)
            .is_some_and(Option::is_none)
    }

    pub fn special_positions(&self) -> BTreeSet<usize> {
        (0..self.len())
            .filter(|&p| self.is_special_position(p))
            .collect()
    }

    pub fn token_strings<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.ids
            .iter()
            .map(|&id| vocab.token(id).unwrap_or(super::vocab::UNK))
            .collect()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || ('\u{2000}'..='\u{206F}').contains(&c)
        || ('\u{3000}'..='\u{303F}').contains(&c)
        || matches!(c, '¡' | '¿' | '«' | '»' | '·' | '§' | '¶')
}

fn normalize(word: &str, lowercase: bool) -> String {
    if lowercase {
        word.to_lowercase()
            .nfd()
            .filter(|c| !is_combining_mark(*c))
            .collect()
    } else {
        word.to_string()
    }
}

/// Splits text into pre-tokenized words: whitespace-separated, with every
/// punctuation character split off as its own word.
pub fn split_words(text: &str, lowercase: bool) -> Vec<String> {
    let mut words = Vec::new();
    for chunk in text.split_whitespace() {
        let chunk = normalize(chunk, lowercase);
        let mut current = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(c.to_string());
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

/// Greedy longest-match segmentation of a single pre-tokenized word.
pub fn wordpiece(word: &str, vocab: &Vocabulary) -> Vec<u32> {
    let unk = vocab.specials().unk;
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() > MAX_WORD_CHARS {
        return vec![unk];
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::with_capacity(word.len() + CONTINUATION_PREFIX.len());
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(id);
                break;
            }
            end -= 1;
        }
        match found {
            Some(id) => {
                pieces.push(id);
                start = end;
            }
            None => return vec![unk],
        }
    }
    pieces
}

/// Subword ids for one surface word (which may itself split into several
/// pre-tokenized words around punctuation).
pub fn word_pieces(form: &str, vocab: &Vocabulary) -> Vec<u32> {
    split_words(form, vocab.lowercase())
        .iter()
        .flat_map(|w| wordpiece(w, vocab))
        .collect()
}

/// Tokenizes free text into a framed model input.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_positions: usize) -> Result<TokenizedInput> {
    let words = split_words(text, vocab.lowercase());
    let pieces = words
        .iter()
        .enumerate()
        .flat_map(|(w, word)| wordpiece(word, vocab).into_iter().map(move |id| (id, w)));
    TokenizedInput::from_pieces(pieces, vocab, max_positions)
}

/// Replaces the tokens at `positions` with `[MASK]`.
pub fn mask_tokens(
    input: &TokenizedInput,
    positions: &BTreeSet<usize>,
    vocab: &Vocabulary,
) -> Result<TokenizedInput> {
    let mut out = input.clone();
    for &p in positions {
        if p >= input.len() {
            return Err(Error::InvalidMask {
                position: p,
                reason: "out of range",
            });
        }
        if input.is_special_position(p) {
            return Err(Error::InvalidMask {
                position: p,
                reason: "targets [CLS] or [SEP]",
            });
        }
        out.ids[p] = vocab.specials().mask;
        out.mask_positions.insert(p);
    }
    Ok(out)
}
