//! Minimal CoNLL-U reader: FORM, UPOS and DEPREL columns plus an `NER=` key
//! in MISC.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NER: &str = "O";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedWord {
    pub form: String,
    pub upos: String,
    pub deprel: String,
    pub ner: String,
    pub word_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence_id: usize,
    pub words: Vec<AnnotatedWord>,
    pub raw_text: String,
}

impl AnnotatedSentence {
    /// Builds a sentence, deriving `raw_text` from the forms when absent.
    pub fn new(sentence_id: usize, words: Vec<AnnotatedWord>, raw_text: Option<String>) -> Self {
        let raw_text = raw_text.unwrap_or_else(|| {
            words
                .iter()
                .map(|w| w.form.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        });
        Self {
            sentence_id,
            words,
            raw_text,
        }
    }
}

fn ner_from_misc(misc: &str) -> Option<&str> {
    misc.split('|').find_map(|kv| kv.strip_prefix("NER="))
}

struct Pending {
    words: Vec<AnnotatedWord>,
    text: Option<String>,
}

impl Pending {
    fn new() -> Self {
        Self {
            words: Vec::new(),
            text: None,
        }
    }
}

/// Parses a CoNLL-U stream. Multiword-token ranges (`3-4`) and empty nodes
/// (`5.1`) are skipped; sentence ids count up from 0 in input order.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<AnnotatedSentence>> {
    let mut sentences = Vec::new();
    let mut pending = Pending::new();
    let flush = |pending: &mut Pending, sentences: &mut Vec<AnnotatedSentence>| {
        let p = std::mem::replace(pending, Pending::new());
        if !p.words.is_empty() {
            sentences.push(AnnotatedSentence::new(sentences.len(), p.words, p.text));
        }
    };

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut pending, &mut sentences);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(text) = comment.trim_start().strip_prefix("text =") {
                pending.text = Some(text.trim().to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("invalid word id {id:?}"),
        })?;
        let word_index = pending.words.len();
        if id != word_index + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("word id {id} out of sequence (expected {})", word_index + 1),
            });
        }
        let (form, upos) = (cols[1], cols[3]);
        if form.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "missing FORM".into(),
            });
        }
        if upos.is_empty() || upos == "_" {
            return Err(Error::Parse {
                line: lineno,
                message: "missing UPOS".into(),
            });
        }
        pending.words.push(AnnotatedWord {
            form: form.to_string(),
            upos: upos.to_string(),
            deprel: cols[7].to_string(),
            ner: ner_from_misc(cols[9]).unwrap_or(DEFAULT_NER).to_string(),
            word_index,
        });
    }
    flush(&mut pending, &mut sentences);
    Ok(sentences)
}
