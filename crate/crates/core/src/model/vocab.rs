use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";

/// Prefix marking a non-initial subword.
pub const CONTINUATION_PREFIX: &str = "##";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
    pub unk: u32,
    pub pad: u32,
}

/// Token string <-> id bijection. The id of a token is its line number in the
/// vocabulary file.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    specials: SpecialIds,
    lowercase: bool,
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocab(format!("empty token at line {}", i + 1)));
            }
            let id = u32::try_from(i).map_err(|_| Error::Vocab("vocabulary too large".into()))?;
            if ids.insert(tok.clone(), id).is_some() {
                return Err(Error::Vocab(format!(
                    "duplicate token {tok:?} at line {}",
                    i + 1
                )));
            }
        }
        let lookup = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing special token {name}")))
        };
        let specials = SpecialIds {
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            mask: lookup(MASK)?,
            unk: lookup(UNK)?,
            pad: lookup(PAD)?,
        };
        Ok(Self {
            tokens,
            ids,
            specials,
            lowercase: false,
        })
    }

    /// Parses a vocabulary file body: one token per line, UTF-8.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.strip_suffix('\n').unwrap_or(text);
        Self::from_tokens(text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Marks the vocabulary as uncased: input text is lowercased and stripped
    /// of combining accents before lookup.
    pub fn with_lowercase(mut self, lowercase: bool) -> Self {
        self.lowercase = lowercase;
        self
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn specials(&self) -> SpecialIds {
        self.specials
    }

    /// True for the five reserved ids.
    pub fn is_special(&self, id: u32) -> bool {
        let s = self.specials;
        id == s.cls || id == s.sep || id == s.mask || id == s.unk || id == s.pad
    }

    /// True for ids that never carry linguistic metadata.
    pub fn is_structural(&self, id: u32) -> bool {
        let s = self.specials;
        id == s.cls || id == s.sep || id == s.mask || id == s.pad
    }
}
