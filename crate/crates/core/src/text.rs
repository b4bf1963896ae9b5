//! Tokenization, document frequencies, tf-idf vectors and cosine similarity.
//!
//! Tokens are case-preserving and carry character offsets (Unicode scalar
//! values, end exclusive) into the text they came from. Every character that
//! is neither alphanumeric nor whitespace is a standalone token, so
//! `"U.S. 1992"` becomes `U . S . 1992`. Matching layers lowercase on top.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Characters that form standalone tokens and are stripped by answer
/// normalization.
pub fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// True when a token holds no alphanumeric characters.
pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punctuation)
}

/// True for tokens that end a sentence.
pub fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<String>,
    /// Per-token `(start, end)` character offsets, end exclusive.
    pub char_offsets: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Lowercased content terms: punctuation tokens are dropped.
    pub fn terms(&self) -> impl Iterator<Item = String> + '_ {
        self.tokens
            .iter()
            .filter(|t| !is_punct_token(t))
            .map(|t| t.to_lowercase())
    }

    /// Sub-sequence over `range`, offsets shifted by `-shift`.
    pub fn slice(&self, range: core::ops::Range<usize>, shift: usize) -> TokenSeq {
        TokenSeq {
            tokens: self.tokens[range.clone()].to_vec(),
            char_offsets: self.char_offsets[range]
                .iter()
                .map(|&(s, e)| (s - shift, e - shift))
                .collect(),
        }
    }

    /// Checks the offset invariants against `source`.
    pub fn is_faithful_to(&self, source: &str) -> bool {
        if self.tokens.len() != self.char_offsets.len() {
            return false;
        }
        let chars: Vec<char> = source.chars().collect();
        let mut prev_end = 0;
        for (i, (tok, &(s, e))) in self.tokens.iter().zip(&self.char_offsets).enumerate() {
            if s >= e || e > chars.len() || (i > 0 && s < prev_end) {
                return false;
            }
            if chars[s..e].iter().collect::<String>() != *tok {
                return false;
            }
            prev_end = e;
        }
        true
    }
}

/// Splits `text` on Unicode whitespace and detaches punctuation characters.
pub fn tokenize(text: &str) -> TokenSeq {
    let mut seq = TokenSeq::default();
    let mut word = String::new();
    let mut word_start = 0;

    fn flush(seq: &mut TokenSeq, word: &mut String, start: usize, end: usize) {
        if !word.is_empty() {
            seq.tokens.push(core::mem::take(word));
            seq.char_offsets.push((start, end));
        }
    }

    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_whitespace() {
            flush(&mut seq, &mut word, word_start, i);
        } else if is_punctuation(c) {
            flush(&mut seq, &mut word, word_start, i);
            seq.tokens.push(String::from(c));
            seq.char_offsets.push((i, i + 1));
        } else {
            if word.is_empty() {
                word_start = i;
            }
            word.push(c);
        }
    }
    flush(&mut seq, &mut word, word_start, n);
    seq
}

/// Returns the characters `start..end` of `text`.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(core::iter::once(text.len()));
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}

/// Document-frequency table over a small collection (one example's chunks).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocFreqs {
    pub n_docs: usize,
    pub df: BTreeMap<String, usize>,
}

impl DocFreqs {
    pub fn from_docs<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSeq>,
    {
        let mut table = DocFreqs::default();
        for doc in docs {
            table.add_terms(doc.terms());
        }
        table
    }

    /// Adds one document given by its (possibly repeated) terms.
    pub fn add_terms<I: IntoIterator<Item = String>>(&mut self, terms: I) {
        self.n_docs += 1;
        let unique: BTreeSet<String> = terms.into_iter().collect();
        for term in unique {
            *self.df.entry(term).or_insert(0) += 1;
        }
    }

    /// Smoothed inverse document frequency `ln((1 + D) / (1 + df))`.
    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        libm::log((1.0 + self.n_docs as f64) / (1.0 + df as f64))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfVector {
    pub weights: BTreeMap<String, f64>,
    pub norm: f64,
}

impl TfIdfVector {
    pub fn from_weights(weights: BTreeMap<String, f64>) -> Self {
        let norm = libm::sqrt(weights.values().map(|w| w * w).sum::<f64>());
        TfIdfVector { weights, norm }
    }
}

/// Sublinear tf times smoothed idf over lowercased content terms.
pub fn tfidf_vector(tokens: &TokenSeq, stats: &DocFreqs) -> TfIdfVector {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for term in tokens.terms() {
        *tf.entry(term).or_insert(0) += 1;
    }
    let weights = tf
        .into_iter()
        .map(|(term, count)| {
            let w = (1.0 + libm::log(count as f64)) * stats.idf(&term);
            (term, w)
        })
        .collect();
    TfIdfVector::from_weights(weights)
}

pub fn cosine(a: &TfIdfVector, b: &TfIdfVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.weights.len() <= b.weights.len() {
        (a, b)
    } else {
        (b, a)
    };
    let dot: f64 = small
        .weights
        .iter()
        .filter_map(|(t, w)| large.weights.get(t).map(|v| w * v))
        .sum();
    (dot / (a.norm * b.norm)).clamp(0.0, 1.0)
}
