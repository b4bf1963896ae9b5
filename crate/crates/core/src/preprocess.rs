//! Context preprocessing: split long documents into pieces of at most `L`
//! tokens, rank pieces by tf-idf cosine to the question, greedily merge
//! consecutive ranked pieces up to `L`, and mark gold-answer spans.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::UniformExample;
use crate::metrics::normalize_answer;
use crate::text::{char_slice, cosine, is_sentence_end, tfidf_vector, tokenize, DocFreqs, TokenSeq};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldTarget {
    /// Only the first occurrence, scanning chunks in order.
    FirstGlobal,
    /// The first occurrence inside every chunk that has one.
    PerChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub max_len: usize,
    pub max_chunks_kept: usize,
    pub gold_target: GoldTarget,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_len: 400,
            max_chunks_kept: 15,
            gold_target: GoldTarget::FirstGlobal,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len < 32 {
            return Err(Error::InvalidConfig("max_len must be at least 32".into()));
        }
        if self.max_chunks_kept == 0 {
            return Err(Error::InvalidConfig("max_chunks_kept must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where a run of chunk tokens came from: document index and the token range
/// (end exclusive) within that document's tokenization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub document_index: usize,
    pub token_range: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    /// Source slices of the merged pieces joined by a single space; token
    /// offsets point into this text.
    pub text: String,
    pub tokens: TokenSeq,
    pub provenance: Vec<Provenance>,
    pub similarity: f64,
    /// Inclusive token spans.
    pub gold_spans: Vec<(usize, usize)>,
}

impl Chunk {
    /// Surface text of the inclusive token span `start..=end`.
    pub fn surface(&self, start: usize, end: usize) -> &str {
        let (s, _) = self.tokens.char_offsets[start];
        let (_, e) = self.tokens.char_offsets[end];
        char_slice(&self.text, s, e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedExample {
    pub id: String,
    pub question: String,
    pub question_tokens: TokenSeq,
    pub chunks: Vec<Chunk>,
    pub answers: Vec<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ProcessedExample {
    pub fn has_gold(&self) -> bool {
        self.chunks.iter().any(|c| !c.gold_spans.is_empty())
    }
}

/// Piece boundaries for one paragraph: sentence accumulation up to `max_len`
/// with a hard cut for sentences that are longer on their own.
pub fn split_ranges(tokens: &TokenSeq, max_len: usize) -> Vec<Range<usize>> {
    assert!(max_len > 0, "max_len must be positive");
    let n = tokens.len();
    if n <= max_len {
        return if n == 0 { Vec::new() } else { alloc::vec![0..n] };
    }
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, tok) in tokens.tokens.iter().enumerate() {
        if is_sentence_end(tok) {
            sentences.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < n {
        sentences.push(start..n);
    }

    let mut pieces = Vec::new();
    let (mut cur_start, mut cur_end) = (0, 0);
    for sentence in sentences {
        if sentence.end - cur_start <= max_len {
            cur_end = sentence.end;
            continue;
        }
        if cur_end > cur_start {
            pieces.push(cur_start..cur_end);
            cur_start = cur_end;
        }
        while sentence.end - cur_start > max_len {
            pieces.push(cur_start..cur_start + max_len);
            cur_start += max_len;
        }
        cur_end = sentence.end;
    }
    if cur_end > cur_start {
        pieces.push(cur_start..cur_end);
    }
    pieces
}

pub fn split_paragraph(tokens: &TokenSeq, max_len: usize) -> Vec<TokenSeq> {
    split_ranges(tokens, max_len)
        .into_iter()
        .map(|r| tokens.slice(r, 0))
        .collect()
}

/// Ranks `chunks` by tf-idf cosine to `question`, statistics taken over the
/// chunks themselves. Returns `(original index, similarity)` in descending
/// similarity, ties kept in original order.
pub fn sort_chunks(question: &TokenSeq, chunks: &[TokenSeq]) -> Vec<(usize, f64)> {
    let stats = DocFreqs::from_docs(chunks);
    let q = tfidf_vector(question, &stats);
    let mut ranked: Vec<(usize, f64)> = chunks
        .iter()
        .enumerate()
        .map(|(i, c)| (i, cosine(&q, &tfidf_vector(c, &stats))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked
}

/// Groups consecutive entries of the ranked list while the running length
/// stays within `max_len`. Returns ranges into the ranked list.
pub fn merge_chunks(lengths: &[usize], max_len: usize) -> Vec<Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    let mut total = 0;
    for (i, &len) in lengths.iter().enumerate() {
        if i > start && total + len > max_len {
            groups.push(start..i);
            start = i;
            total = 0;
        }
        total += len;
    }
    if start < lengths.len() {
        groups.push(start..lengths.len());
    }
    groups
}

/// All inclusive token spans of `chunk` matching an answer alias.
///
/// An alias matches where its tokens appear verbatim up to case. Aliases with
/// no such occurrence fall back to comparing normalized surface text of spans
/// that start and end on content tokens, which catches spacing and
/// punctuation variants such as `U.S.` against `US`.
pub fn mark_spans(tokens: &TokenSeq, text: &str, answers: &[String]) -> Vec<(usize, usize)> {
    let lowered: Vec<String> = tokens.tokens.iter().map(|t| t.to_lowercase()).collect();
    let content: Vec<bool> = tokens.tokens.iter().map(|t| !normalize_answer(t).is_empty()).collect();
    let mut spans = Vec::new();
    for alias in answers {
        let alias_tokens: Vec<String> = tokenize(alias).tokens.iter().map(|t| t.to_lowercase()).collect();
        let m = alias_tokens.len();
        if m == 0 || m > lowered.len() {
            continue;
        }
        let before = spans.len();
        for s in 0..=lowered.len() - m {
            if lowered[s..s + m] == alias_tokens[..] {
                spans.push((s, s + m - 1));
            }
        }
        let target = normalize_answer(alias);
        if spans.len() > before || target.is_empty() {
            continue;
        }
        let max_width = 2 * m + 2;
        for s in (0..lowered.len()).filter(|&s| content[s]) {
            for e in (s..lowered.len().min(s + max_width)).filter(|&e| content[e]) {
                let (cs, _) = tokens.char_offsets[s];
                let (_, ce) = tokens.char_offsets[e];
                if normalize_answer(char_slice(text, cs, ce)) == target {
                    spans.push((s, e));
                }
            }
        }
    }
    spans.sort_unstable();
    spans.dedup();
    spans
}

struct Piece {
    document_index: usize,
    range: Range<usize>,
}

/// Full split, sort, merge and mark pipeline for one example.
pub fn preprocess_example(example: &UniformExample, config: &PreprocessConfig) -> ProcessedExample {
    let doc_tokens: Vec<TokenSeq> = example.documents.iter().map(|d| tokenize(&d.text)).collect();
    let mut pieces = Vec::new();
    for (d, toks) in doc_tokens.iter().enumerate() {
        for range in split_ranges(toks, config.max_len) {
            pieces.push(Piece {
                document_index: d,
                range,
            });
        }
    }
    let piece_tokens: Vec<TokenSeq> = pieces
        .iter()
        .map(|p| doc_tokens[p.document_index].slice(p.range.clone(), 0))
        .collect();
    let question_tokens = tokenize(&example.question);
    let ranked = sort_chunks(&question_tokens, &piece_tokens);
    let lengths: Vec<usize> = ranked.iter().map(|&(i, _)| piece_tokens[i].len()).collect();

    let mut chunks = Vec::new();
    for group in merge_chunks(&lengths, config.max_len)
        .into_iter()
        .take(config.max_chunks_kept)
    {
        let mut chunk = Chunk {
            text: String::new(),
            tokens: TokenSeq::default(),
            provenance: Vec::new(),
            similarity: ranked[group.start].1,
            gold_spans: Vec::new(),
        };
        let mut cursor = 0;
        for &(piece_idx, _) in &ranked[group] {
            let piece = &pieces[piece_idx];
            let toks = &piece_tokens[piece_idx];
            let first = toks.char_offsets[0].0;
            let last = toks.char_offsets[toks.len() - 1].1;
            if cursor > 0 {
                chunk.text.push(' ');
                cursor += 1;
            }
            chunk
                .text
                .push_str(char_slice(&example.documents[piece.document_index].text, first, last));
            chunk.tokens.tokens.extend(toks.tokens.iter().cloned());
            chunk.tokens.char_offsets.extend(
                toks.char_offsets
                    .iter()
                    .map(|&(s, e)| (s - first + cursor, e - first + cursor)),
            );
            cursor += last - first;
            chunk.provenance.push(Provenance {
                document_index: piece.document_index,
                token_range: (piece.range.start, piece.range.end),
            });
        }
        chunks.push(chunk);
    }

    let mut found_first = false;
    for chunk in &mut chunks {
        let spans = mark_spans(&chunk.tokens, &chunk.text, &example.answers);
        let first = spans.first().copied();
        chunk.gold_spans = match (config.gold_target, first) {
            (_, None) => Vec::new(),
            (GoldTarget::PerChunk, Some(span)) => alloc::vec![span],
            (GoldTarget::FirstGlobal, Some(span)) if !found_first => {
                found_first = true;
                alloc::vec![span]
            }
            (GoldTarget::FirstGlobal, Some(_)) => Vec::new(),
        };
    }

    let mut metadata = example.metadata.clone();
    if !example.answers.is_empty() {
        let answerable = chunks.iter().any(|c| !c.gold_spans.is_empty());
        metadata.insert("answerable".to_string(), answerable.to_string());
    }
    ProcessedExample {
        id: example.id.clone(),
        question: example.question.clone(),
        question_tokens,
        chunks,
        answers: example.answers.clone(),
        metadata,
    }
}
