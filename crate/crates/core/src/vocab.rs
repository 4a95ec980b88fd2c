//! Unified token space: text words, nine special tokens, human-motion codes
//! and object-motion codes in contiguous disjoint id ranges.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Special {
    Bos,
    Eos,
    Pad,
    Unk,
    Bohm,
    Eohm,
    Boom,
    Eoom,
    Ogt,
}

impl Special {
    /// Layout order; `Ogt` is last.
    pub const ALL: [Special; 9] = [
        Special::Bos,
        Special::Eos,
        Special::Pad,
        Special::Unk,
        Special::Bohm,
        Special::Eohm,
        Special::Boom,
        Special::Eoom,
        Special::Ogt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Special::Bos => "<bos>",
            Special::Eos => "<eos>",
            Special::Pad => "<pad>",
            Special::Unk => "<unk>",
            Special::Bohm => "<bohm>",
            Special::Eohm => "<eohm>",
            Special::Boom => "<boom>",
            Special::Eoom => "<eoom>",
            Special::Ogt => "<ogt>",
        }
    }

    fn offset(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Human,
    Object,
}

/// Decoded meaning of a token id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Word(usize),
    Special(Special),
    Human(usize),
    Object(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnifiedVocab {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    k_h: usize,
    k_o: usize,
}

impl UnifiedVocab {
    pub fn build(words: &[String], k_h: usize, k_o: usize) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::DuplicateWord(w.clone()));
            }
        }
        Ok(Self {
            words: words.to_vec(),
            index,
            k_h,
            k_o,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn text_size(&self) -> usize {
        self.words.len()
    }

    pub fn human_size(&self) -> usize {
        self.k_h
    }

    pub fn object_size(&self) -> usize {
        self.k_o
    }

    pub fn special(&self, s: Special) -> usize {
        self.words.len() + s.offset()
    }

    /// First id of the new (non-text) tokens.
    pub fn first_new_token(&self) -> usize {
        self.words.len()
    }

    pub fn base_human(&self) -> usize {
        self.words.len() + Special::ALL.len()
    }

    pub fn base_object(&self) -> usize {
        self.base_human() + self.k_h
    }

    pub fn total(&self) -> usize {
        self.base_object() + self.k_o
    }

    pub fn word_id(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    /// Lower-cases, splits on whitespace and punctuation, maps out-of-table
    /// words to `<unk>`.
    pub fn encode_caption(&self, caption: &str) -> Vec<usize> {
        let unk = self.special(Special::Unk);
        caption
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| self.word_id(&w.to_lowercase()).unwrap_or(unk))
            .collect()
    }

    /// Joins word tokens with spaces; specials render by name.
    pub fn decode_words(&self, ids: &[usize]) -> String {
        ids.iter()
            .map(|&id| match self.classify(id) {
                Ok(TokenKind::Word(i)) => self.words[i].clone(),
                Ok(TokenKind::Special(s)) => s.name().to_string(),
                Ok(TokenKind::Human(i)) => alloc::format!("<h{i}>"),
                Ok(TokenKind::Object(i)) => alloc::format!("<o{i}>"),
                Err(_) => "<?>".to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn classify(&self, id: usize) -> Result<TokenKind> {
        let kt = self.words.len();
        let (bh, bo) = (self.base_human(), self.base_object());
        Ok(if id < kt {
            TokenKind::Word(id)
        } else if id < bh {
            TokenKind::Special(Special::ALL[id - kt])
        } else if id < bo {
            TokenKind::Human(id - bh)
        } else if id < self.total() {
            TokenKind::Object(id - bo)
        } else {
            return Err(Error::Index {
                what: "token id",
                index: id,
                limit: self.total(),
            });
        })
    }

    pub fn compose(&self, kind: TokenKind) -> Result<usize> {
        let (id, local, limit, what) = match kind {
            TokenKind::Word(i) => (i, i, self.words.len(), "word index"),
            TokenKind::Special(s) => return Ok(self.special(s)),
            TokenKind::Human(i) => (self.base_human() + i, i, self.k_h, "human code"),
            TokenKind::Object(i) => (self.base_object() + i, i, self.k_o, "object code"),
        };
        if local >= limit {
            return Err(Error::Index { what, index: local, limit });
        }
        Ok(id)
    }

    pub fn motion_markers(&self, m: Modality) -> (usize, usize) {
        match m {
            Modality::Object => (self.special(Special::Boom), self.special(Special::Eoom)),
            _ => (self.special(Special::Bohm), self.special(Special::Eohm)),
        }
    }

    /// `[begin, base + s_1, …, base + s_m, end]` for a motion modality.
    pub fn wrap_motion(&self, indices: &[usize], m: Modality) -> Result<Vec<usize>> {
        let (begin, end) = self.motion_markers(m);
        let mut out = Vec::with_capacity(indices.len() + 2);
        out.push(begin);
        for &i in indices {
            out.push(self.compose(match m {
                Modality::Object => TokenKind::Object(i),
                _ => TokenKind::Human(i),
            })?);
        }
        out.push(end);
        Ok(out)
    }

    /// Inverse of [`wrap_motion`](Self::wrap_motion).
    pub fn unwrap_motion(&self, tokens: &[usize], m: Modality) -> Result<Vec<usize>> {
        let (begin, end) = self.motion_markers(m);
        let bad = |reason: &str| Error::Generation {
            reason: reason.into(),
            tokens: tokens.to_vec(),
        };
        if tokens.len() < 2 || tokens[0] != begin || tokens[tokens.len() - 1] != end {
            return Err(bad("missing motion boundary tokens"));
        }
        tokens[1..tokens.len() - 1]
            .iter()
            .map(|&id| match (self.classify(id), m) {
                (Ok(TokenKind::Human(i)), Modality::Human) => Ok(i),
                (Ok(TokenKind::Object(i)), Modality::Object) => Ok(i),
                _ => Err(bad("foreign token inside motion span")),
            })
            .collect()
    }
}
