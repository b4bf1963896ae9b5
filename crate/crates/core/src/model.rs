//! Linear span extractor trained with a shared-norm objective.
//!
//! Every span of at most `max_span_len` tokens in every chunk of an example
//! is a candidate. Candidates are scored with a sparse linear model over
//! hand-built features and normalized by one softmax across all chunks. The
//! training loss is the negative log of the summed probability of the marked
//! gold spans plus an L2 penalty; optimization is plain per-example SGD with
//! early stopping on development exact match. Decoding returns the highest
//! scoring candidate across all chunks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{exact_match, Prediction};
use crate::preprocess::ProcessedExample;
use crate::text::{is_punct_token, is_sentence_end, DocFreqs};
use crate::{Error, Result};

pub const FEATURE_SCHEMA_VERSION: &str = "span-features/v1";

/// Half-width of the context window used by the tf-idf overlap feature.
const WINDOW: usize = 10;

pub type FeatureMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub max_span_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            l2: 1e-6,
            max_epochs: 12,
            patience: 3,
            max_span_len: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be non-negative");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.patience > self.max_epochs {
            return bad("need 1 <= patience <= max_epochs");
        }
        if self.max_span_len == 0 {
            return bad("max_span_len must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSpanModel {
    pub weights: BTreeMap<String, f64>,
    pub feature_schema_version: String,
    pub train_config: TrainConfig,
    /// Datasets trained on, in order; fine-tuning appends.
    pub provenance: Vec<String>,
}

impl LinearSpanModel {
    pub fn untrained(train_config: TrainConfig) -> Self {
        LinearSpanModel {
            weights: BTreeMap::new(),
            feature_schema_version: FEATURE_SCHEMA_VERSION.to_string(),
            train_config,
            provenance: Vec::new(),
        }
    }

    pub fn check_schema(&self) -> Result<()> {
        if self.feature_schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                expected: FEATURE_SCHEMA_VERSION.to_string(),
                found: self.feature_schema_version.clone(),
            });
        }
        if let Some((name, _)) = self.weights.iter().find(|(_, w)| !w.is_finite()) {
            return Err(Error::InvalidConfig(format!("weight `{name}` is not finite")));
        }
        Ok(())
    }

    pub fn score(&self, features: &FeatureMap) -> f64 {
        features
            .iter()
            .filter_map(|(k, v)| self.weights.get(k).map(|w| w * v))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub example_id: String,
    pub chunk_index: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    /// Log-probability of the span under the shared softmax.
    pub score: f64,
}

impl From<SpanPrediction> for Prediction {
    fn from(p: SpanPrediction) -> Self {
        Prediction {
            id: p.example_id,
            text: p.text,
            score: p.score,
            chunk_index: Some(p.chunk_index),
            start: Some(p.start),
            end: Some(p.end),
            answers: None,
        }
    }
}

const WH_WORDS: &[&str] = &["what", "who", "whom", "whose", "when", "where", "which", "why", "how"];

fn bucket(n: usize, edges: &[(usize, &'static str)], last: &'static str) -> &'static str {
    edges.iter().find(|(hi, _)| n <= *hi).map_or(last, |(_, name)| name)
}

/// Per-example feature extraction state. Building it once per example keeps
/// candidate featurization linear in the span count.
pub struct ExampleFeaturizer<'a> {
    example: &'a ProcessedExample,
    wh: String,
    head: String,
    q_terms: Vec<String>,
    q_bigrams: BTreeSet<(String, String)>,
    lowered: Vec<Vec<String>>,
    /// Index into `q_terms` for tokens that are question terms.
    q_term_of: Vec<Vec<Option<usize>>>,
    q_term_idf: Vec<f64>,
    rarest_q_term: Option<usize>,
    sentence_start: Vec<Vec<bool>>,
    /// Sentence index of every token, and each sentence's token range.
    sentence_of: Vec<Vec<usize>>,
    sentences: Vec<Vec<(usize, usize)>>,
    prev_q: Vec<Vec<Option<usize>>>,
    next_q: Vec<Vec<Option<usize>>>,
}

impl<'a> ExampleFeaturizer<'a> {
    pub fn new(example: &'a ProcessedExample) -> Self {
        let q_lower: Vec<String> = example
            .question_tokens
            .tokens
            .iter()
            .map(|t| t.to_lowercase())
            .collect();
        let wh_pos = q_lower.iter().position(|t| WH_WORDS.contains(&t.as_str()));
        let mut wh = wh_pos.map_or_else(|| "other".to_string(), |i| q_lower[i].clone());
        let mut head_pos = wh_pos.map_or(0, |i| i + 1);
        if wh == "how" && matches!(q_lower.get(head_pos).map(String::as_str), Some("many" | "much")) {
            wh = "how_many".to_string();
            head_pos += 1;
        }
        let head = q_lower
            .get(head_pos)
            .filter(|t| !is_punct_token(t))
            .cloned()
            .unwrap_or_else(|| "none".to_string());

        let content: Vec<&String> = q_lower
            .iter()
            .filter(|t| !is_punct_token(t) && !WH_WORDS.contains(&t.as_str()))
            .collect();
        let q_terms: Vec<String> = content
            .iter()
            .map(|t| (*t).clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let q_bigrams = q_lower
            .windows(2)
            .filter(|w| !is_punct_token(&w[0]) && !is_punct_token(&w[1]))
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect();

        let lowered: Vec<Vec<String>> = example
            .chunks
            .iter()
            .map(|c| c.tokens.tokens.iter().map(|t| t.to_lowercase()).collect())
            .collect();

        // Sentence-level document frequencies across all chunks.
        let mut sentence_df = DocFreqs::default();
        for toks in &lowered {
            let mut sentence = Vec::new();
            for t in toks {
                if is_sentence_end(t) {
                    sentence_df.add_terms(core::mem::take(&mut sentence));
                } else if !is_punct_token(t) {
                    sentence.push(t.clone());
                }
            }
            if !sentence.is_empty() {
                sentence_df.add_terms(sentence);
            }
        }
        let q_term_idf: Vec<f64> = q_terms.iter().map(|t| sentence_df.idf(t)).collect();
        let mut rarest_q_term: Option<usize> = None;
        for (q, &idf) in q_term_idf.iter().enumerate() {
            if idf > 0.0 && rarest_q_term.map_or(true, |b| idf > q_term_idf[b]) {
                rarest_q_term = Some(q);
            }
        }

        let q_term_of: Vec<Vec<Option<usize>>> = lowered
            .iter()
            .map(|toks| toks.iter().map(|t| q_terms.binary_search(t).ok()).collect())
            .collect();
        let sentence_start = lowered
            .iter()
            .map(|toks| {
                (0..toks.len())
                    .map(|i| i == 0 || is_sentence_end(&toks[i - 1]))
                    .collect()
            })
            .collect();
        let mut sentence_of = Vec::new();
        let mut sentences = Vec::new();
        for toks in &lowered {
            let mut ids = Vec::with_capacity(toks.len());
            let mut bounds = Vec::new();
            let mut begin = 0;
            for (i, t) in toks.iter().enumerate() {
                ids.push(bounds.len());
                if is_sentence_end(t) || i + 1 == toks.len() {
                    bounds.push((begin, i + 1));
                    begin = i + 1;
                }
            }
            sentence_of.push(ids);
            sentences.push(bounds);
        }
        let mut prev_q = Vec::new();
        let mut next_q = Vec::new();
        for marks in &q_term_of {
            let n = marks.len();
            let mut prev = vec![None; n];
            let mut next = vec![None; n];
            let mut last = None;
            for i in 0..n {
                prev[i] = last;
                if marks[i].is_some() {
                    last = Some(i);
                }
            }
            last = None;
            for i in (0..n).rev() {
                next[i] = last;
                if marks[i].is_some() {
                    last = Some(i);
                }
            }
            prev_q.push(prev);
            next_q.push(next);
        }

        ExampleFeaturizer {
            example,
            wh,
            head,
            q_terms,
            q_bigrams,
            lowered,
            q_term_of,
            q_term_idf,
            rarest_q_term,
            sentence_start,
            sentence_of,
            sentences,
            prev_q,
            next_q,
        }
    }

    fn shape(&self, chunk: usize, start: usize, end: usize) -> &'static str {
        let toks = &self.example.chunks[chunk].tokens.tokens[start..=end];
        let words: Vec<&String> = toks.iter().filter(|t| !is_punct_token(t)).collect();
        if words.is_empty() {
            "punct"
        } else if words.iter().all(|w| w.chars().all(|c| c.is_numeric())) {
            "numeric"
        } else if toks[0].chars().next().is_some_and(char::is_uppercase) {
            "capitalized"
        } else {
            "lower"
        }
    }

    /// Sparse features of the inclusive span `start..=end` in `chunk`.
    pub fn featurize(&self, chunk: usize, start: usize, end: usize) -> Result<FeatureMap> {
        let len = self.lowered.get(chunk).map_or(0, Vec::len);
        if chunk >= self.lowered.len() || start > end || end >= len {
            return Err(Error::SpanOutOfBounds { chunk, start, end, len });
        }
        let toks = &self.lowered[chunk];
        let marks = &self.q_term_of[chunk];
        let mut f = FeatureMap::new();
        let mut put = |k: String, v: f64| {
            if v != 0.0 {
                *f.entry(k).or_insert(0.0) += v;
            }
        };

        put("bias".into(), 1.0);

        let unigram = (start..=end).filter(|&i| marks[i].is_some()).count();
        put("q_unigram_overlap".into(), unigram as f64);
        let bigram = (start..end)
            .filter(|&i| self.q_bigrams.contains(&(toks[i].clone(), toks[i + 1].clone())))
            .count();
        put("q_bigram_overlap".into(), bigram as f64);

        let mut seen = vec![false; self.q_terms.len()];
        let lo = start.saturating_sub(WINDOW);
        let hi = (end + WINDOW).min(len - 1);
        let mut window = 0.0;
        for i in (lo..start).chain(end + 1..=hi) {
            if let Some(q) = marks[i] {
                if !seen[q] {
                    seen[q] = true;
                    window += self.q_term_idf[q];
                }
            }
        }
        put("window_tfidf_overlap".into(), window);

        let dist_left = self.prev_q[chunk][start].map(|p| start - p);
        let dist_right = self.next_q[chunk][end].map(|n| n - end);
        let dist = match (dist_left, dist_right) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let dist_bucket = dist.map_or("none", |d| {
            bucket(d, &[(1, "1"), (2, "2"), (3, "3"), (5, "4-5"), (10, "6-10")], "far")
        });
        put(format!("q_dist={dist_bucket}"), 1.0);

        // Question terms found in the span's sentence, outside the span.
        let (s_lo, s_hi) = self.sentences[chunk][self.sentence_of[chunk][start]];
        let mut in_sentence = vec![false; self.q_terms.len()];
        for i in (s_lo..start).chain(end + 1..s_hi.max(end + 1)) {
            if let Some(q) = marks[i] {
                in_sentence[q] = true;
            }
        }
        let total_idf: f64 = self.q_term_idf.iter().sum();
        if total_idf > 0.0 {
            let matched: f64 = (0..self.q_terms.len())
                .filter(|&q| in_sentence[q])
                .map(|q| self.q_term_idf[q])
                .sum();
            put("sentence_q_match".into(), matched / total_idf);
        }
        if let Some(rarest) = self.rarest_q_term {
            if in_sentence[rarest] {
                put("sentence_has_rarest_q_term".into(), 1.0);
            }
        }

        let width = end - start + 1;
        put(
            format!(
                "len={}",
                bucket(width, &[(1, "1"), (2, "2"), (3, "3"), (4, "4"), (8, "5-8")], "9+")
            ),
            1.0,
        );
        put(
            format!("rank={}", bucket(chunk, &[(0, "0"), (1, "1"), (2, "2")], "3+")),
            1.0,
        );
        if self.sentence_start[chunk][start] {
            put("starts_sentence".into(), 1.0);
        }

        let shape = self.shape(chunk, start, end);
        put(format!("shape={shape}"), 1.0);
        put(format!("wh={}|shape={shape}", self.wh), 1.0);
        put(format!("head={}|shape={shape}", self.head), 1.0);

        let span_punct = (start..=end).filter(|&i| is_punct_token(&toks[i])).count();
        if span_punct > 0 {
            put("has_punct".into(), 1.0);
        }
        if is_punct_token(&toks[start]) || is_punct_token(&toks[end]) {
            put("edge_punct".into(), 1.0);
        }

        let prev = if start == 0 { "<s>" } else { toks[start - 1].as_str() };
        let next = toks.get(end + 1).map_or("</s>", String::as_str);
        put(format!("prev={prev}"), 1.0);
        put(format!("next={next}"), 1.0);
        put(format!("head={}|prev={prev}", self.head), 1.0);
        put(format!("head={}|next={next}", self.head), 1.0);
        if start > 0 && marks[start - 1].is_some() {
            put("prev_in_question".into(), 1.0);
        }
        if end + 1 < len && marks[end + 1].is_some() {
            put("next_in_question".into(), 1.0);
        }
        put(format!("first={}", toks[start]), 1.0);
        put(format!("last={}", toks[end]), 1.0);
        Ok(f)
    }
}

/// Convenience wrapper building a one-off featurizer.
pub fn featurize(example: &ProcessedExample, chunk: usize, span: (usize, usize)) -> Result<FeatureMap> {
    ExampleFeaturizer::new(example).featurize(chunk, span.0, span.1)
}

/// All candidate spans `(chunk, start, end)` in decoding tie-break order:
/// chunk, then start, then end.
pub fn candidate_spans(example: &ProcessedExample, max_span_len: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (c, chunk) in example.chunks.iter().enumerate() {
        let n = chunk.tokens.len();
        for s in 0..n {
            for e in s..n.min(s + max_span_len) {
                out.push((c, s, e));
            }
        }
    }
    out
}

/// Flattened sparse feature vectors for the candidates of one example.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateSet {
    offsets: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl CandidateSet {
    pub fn new() -> Self {
        CandidateSet {
            offsets: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
        }
    }

    pub fn push(&mut self, features: impl IntoIterator<Item = (u32, f64)>) {
        for (i, v) in features {
            self.idx.push(i);
            self.val.push(v);
        }
        self.offsets.push(self.idx.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[k]..self.offsets[k + 1];
        self.idx[range.clone()]
            .iter()
            .zip(&self.val[range])
            .map(|(&i, &v)| (i as usize, v))
    }

    pub fn scores(&self, weights: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.features(k).map(|(i, v)| weights[i] * v).sum())
            .collect()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(xs.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Shared softmax over every candidate of an example.
pub fn candidate_probabilities(weights: &[f64], candidates: &CandidateSet) -> Vec<f64> {
    let scores = candidates.scores(weights);
    let z = log_sum_exp(&scores);
    scores.iter().map(|s| libm::exp(s - z)).collect()
}

/// `-log sum_{g in gold} p_g + l2/2 * |w|^2` under the shared softmax.
pub fn shared_norm_loss(weights: &[f64], candidates: &CandidateSet, gold: &[usize], l2: f64) -> f64 {
    let scores = candidates.scores(weights);
    let gold_scores: Vec<f64> = gold.iter().map(|&g| scores[g]).collect();
    let penalty = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    log_sum_exp(&scores) - log_sum_exp(&gold_scores) + penalty
}

/// Gradient of [`shared_norm_loss`] with respect to the weights.
pub fn shared_norm_gradient(weights: &[f64], candidates: &CandidateSet, gold: &[usize], l2: f64) -> Vec<f64> {
    let mut grad: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    accumulate_gradient(weights, candidates, gold, &mut grad, 1.0);
    grad
}

/// Adds `scale` times the data term of the gradient into `grad` and returns
/// the data term of the loss.
fn accumulate_gradient(
    weights: &[f64],
    candidates: &CandidateSet,
    gold: &[usize],
    grad: &mut [f64],
    scale: f64,
) -> f64 {
    let scores = candidates.scores(weights);
    let z = log_sum_exp(&scores);
    let gold_scores: Vec<f64> = gold.iter().map(|&g| scores[g]).collect();
    let z_gold = log_sum_exp(&gold_scores);
    for (k, s) in scores.iter().enumerate() {
        let p = libm::exp(s - z);
        if p == 0.0 {
            continue;
        }
        for (i, v) in candidates.features(k) {
            grad[i] += scale * p * v;
        }
    }
    for (&g, s) in gold.iter().zip(&gold_scores) {
        let q = libm::exp(s - z_gold);
        for (i, v) in candidates.features(g) {
            grad[i] -= scale * q * v;
        }
    }
    z - z_gold
}

/// Dense feature index over names; stable insertion order.
#[derive(Default)]
struct FeatureIndex {
    ids: BTreeMap<String, u32>,
    names: Vec<String>,
}

impl FeatureIndex {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.to_string(), id);
        self.names.push(name.to_string());
        id
    }
}

struct Prepared<'a> {
    example: &'a ProcessedExample,
    spans: Vec<(usize, usize, usize)>,
    candidates: CandidateSet,
    gold: Vec<usize>,
}

fn prepare<'a>(example: &'a ProcessedExample, max_span_len: usize, index: &mut FeatureIndex) -> Prepared<'a> {
    let featurizer = ExampleFeaturizer::new(example);
    let spans = candidate_spans(example, max_span_len);
    let mut candidates = CandidateSet::new();
    let mut gold = Vec::new();
    for (k, &(c, s, e)) in spans.iter().enumerate() {
        let f = featurizer.featurize(c, s, e).expect("candidate spans are in bounds");
        candidates.push(f.iter().map(|(name, &v)| (index.intern(name), v)));
        if example.chunks[c].gold_spans.contains(&(s, e)) {
            gold.push(k);
        }
    }
    Prepared {
        example,
        spans,
        candidates,
        gold,
    }
}

fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(k);
        }
    }
    best
}

fn dev_em(prepared: &[Prepared<'_>], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for p in prepared {
        if p.example.answers.is_empty() {
            continue;
        }
        n += 1;
        if let Some(k) = argmax(&p.candidates.scores(weights)) {
            let (c, s, e) = p.spans[k];
            let text = p.example.chunks[c].surface(s, e);
            total += exact_match(text, &p.example.answers).unwrap_or(0.0);
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Source label of a processed example: id namespace or `dataset` metadata.
pub fn source_label(example: &ProcessedExample) -> String {
    match example.id.split_once(':') {
        Some((ns, _)) => ns.to_string(),
        None => example
            .metadata
            .get("dataset")
            .cloned()
            .unwrap_or_else(|| "default".to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearSpanModel,
    /// Selection-set EM before training (index 0) and after every epoch.
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub skipped_unanswerable: usize,
}

/// Trains (or fine-tunes, when `init` is given) a span model.
///
/// Training examples without a gold span reachable as a candidate are
/// skipped and counted. Early stopping selects on `dev` exact match; when
/// `dev` is empty the training examples are used instead.
pub fn train(
    train: &[ProcessedExample],
    dev: &[ProcessedExample],
    config: &TrainConfig,
    init: Option<&LinearSpanModel>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if let Some(model) = init {
        model.check_schema()?;
    }
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }

    let mut index = FeatureIndex::default();
    if let Some(model) = init {
        for name in model.weights.keys() {
            index.intern(name);
        }
    }
    let mut skipped = 0;
    let mut train_set = Vec::new();
    for ex in train {
        let p = prepare(ex, config.max_span_len, &mut index);
        if p.gold.is_empty() {
            skipped += 1;
        } else {
            train_set.push(p);
        }
    }
    if train_set.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let dev_set: Vec<Prepared<'_>> = dev
        .iter()
        .map(|ex| prepare(ex, config.max_span_len, &mut index))
        .collect();
    let selection = if dev_set.is_empty() { &train_set } else { &dev_set };

    let mut weights = vec![0.0; index.names.len()];
    if let Some(model) = init {
        for (name, w) in &model.weights {
            weights[index.ids[name] as usize] = *w;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best_weights = weights.clone();
    let mut best_em = dev_em(selection, &weights);
    let mut history = vec![best_em];
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut grad = vec![0.0; weights.len()];
    let decay = 1.0 - config.learning_rate * config.l2;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let p = &train_set[i];
            accumulate_gradient(&weights, &p.candidates, &p.gold, &mut grad, 1.0);
            if decay != 1.0 {
                weights.iter_mut().for_each(|w| *w *= decay);
            }
            for k in 0..p.candidates.len() {
                for (f, _) in p.candidates.features(k) {
                    if grad[f] != 0.0 {
                        weights[f] -= config.learning_rate * grad[f];
                        grad[f] = 0.0;
                    }
                }
            }
        }
        let em = dev_em(selection, &weights);
        history.push(em);
        if em > best_em {
            best_em = em;
            best_weights.clone_from(&weights);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let mut provenance = init.map(|m| m.provenance.clone()).unwrap_or_default();
    let sources: BTreeSet<String> = train.iter().map(source_label).collect();
    provenance.push(sources.into_iter().collect::<Vec<_>>().join("+"));

    let model = LinearSpanModel {
        weights: index
            .names
            .into_iter()
            .zip(best_weights)
            .filter(|(_, w)| *w != 0.0)
            .collect(),
        feature_schema_version: FEATURE_SCHEMA_VERSION.to_string(),
        train_config: *config,
        provenance,
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        skipped_unanswerable: skipped,
    })
}

/// Highest-scoring candidate across all chunks; ties go to the lower chunk,
/// then the lower start, then the shorter span.
pub fn predict(model: &LinearSpanModel, example: &ProcessedExample) -> Result<SpanPrediction> {
    model.check_schema()?;
    let featurizer = ExampleFeaturizer::new(example);
    let spans = candidate_spans(example, model.train_config.max_span_len);
    if spans.is_empty() {
        return Err(Error::NoCandidates(example.id.clone()));
    }
    let scores: Vec<f64> = spans
        .iter()
        .map(|&(c, s, e)| featurizer.featurize(c, s, e).map(|f| model.score(&f)))
        .collect::<Result<_>>()?;
    let best = argmax(&scores).ok_or_else(|| Error::NoCandidates(example.id.clone()))?;
    let (c, s, e) = spans[best];
    Ok(SpanPrediction {
        example_id: example.id.clone(),
        chunk_index: c,
        start: s,
        end: e,
        text: example.chunks[c].surface(s, e).to_string(),
        score: scores[best] - log_sum_exp(&scores),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, UniformExample};
    use crate::preprocess::{preprocess_example, PreprocessConfig};

    fn processed(question: &str, docs: &[&str], answer: &str) -> ProcessedExample {
        let ex = UniformExample {
            id: "t".into(),
            question: question.into(),
            documents: docs.iter().map(|d| Document::new(*d)).collect(),
            answers: vec![answer.to_string()],
            metadata: BTreeMap::new(),
        };
        preprocess_example(
            &ex,
            &PreprocessConfig {
                max_len: 32,
                ..Default::default()
            },
        )
    }

    #[test]
    fn bigram_and_rank_features() {
        let ex = processed(
            "who painted the Blue Lagoon?",
            &["The Blue Lagoon was painted by Ada Lind."],
            "Ada Lind",
        );
        let f = featurize(&ex, 0, (1, 2)).unwrap();
        assert!(f["q_bigram_overlap"] >= 1.0);
        assert_eq!(f["q_unigram_overlap"], 2.0);
        assert_eq!(f["rank=0"], 1.0);
        let g = featurize(&ex, 0, (6, 7)).unwrap();
        assert_eq!(g["wh=who|shape=capitalized"], 1.0);
        assert!(!g.contains_key("q_unigram_overlap"));
        assert_eq!(g["prev=by"], 1.0);
        assert_eq!(g["q_dist=2"], 1.0);
    }

    #[test]
    fn featurize_rejects_out_of_bounds() {
        let ex = processed("who?", &["One two three."], "two");
        assert!(matches!(featurize(&ex, 0, (2, 9)), Err(Error::SpanOutOfBounds { .. })));
        assert!(matches!(featurize(&ex, 3, (0, 0)), Err(Error::SpanOutOfBounds { .. })));
        assert!(matches!(featurize(&ex, 0, (2, 1)), Err(Error::SpanOutOfBounds { .. })));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut set = CandidateSet::new();
        set.push([(0, 1.0), (1, 2.0)]);
        set.push([(1, -1.0)]);
        set.push([(2, 0.5), (0, 3.0)]);
        let p = candidate_probabilities(&[0.3, -0.7, 1.1], &set);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_prefers_earliest_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 20,
            max_epochs: 5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            max_span_len: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
