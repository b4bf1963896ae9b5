//! Answer normalization, exact match, token F1 and list precision/recall/F1.
//!
//! Normalization follows the SQuAD evaluation script: lowercase, drop
//! punctuation characters, drop the articles `a`/`an`/`the`, collapse
//! whitespace. EM and F1 take the maximum over gold aliases.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::UniformExample;
use crate::text::is_punctuation;
use crate::{Error, Result};

pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|&c| !is_punctuation(c)).collect();
    let mut out = String::with_capacity(stripped.len());
    for word in stripped.split_whitespace() {
        if matches!(word, "a" | "an" | "the") {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn exact_match(pred: &str, golds: &[String]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let p = normalize_answer(pred);
    let hit = golds.iter().any(|g| normalize_answer(g) == p);
    Ok(if hit { 1.0 } else { 0.0 })
}

fn f1_single(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &g {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn token_f1(pred: &str, golds: &[String]) -> Result<f64> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let p = normalize_answer(pred);
    Ok(golds
        .iter()
        .map(|g| f1_single(&p, &normalize_answer(g)))
        .fold(0.0, f64::max))
}

/// Set precision, recall and F1 between predicted and gold answer lists.
pub fn list_prf(preds: &[String], golds: &[String]) -> Result<(f64, f64, f64)> {
    if golds.is_empty() {
        return Err(Error::EmptyGolds);
    }
    let p: BTreeSet<String> = preds.iter().map(|s| normalize_answer(s)).collect();
    let g: BTreeSet<String> = golds.iter().map(|s| normalize_answer(s)).collect();
    if p.is_empty() {
        return Ok((0.0, 0.0, 0.0));
    }
    let common = p.intersection(&g).count() as f64;
    let precision = common / p.len() as f64;
    let recall = common / g.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f1))
}

/// One evaluated answer, as produced by the span model or read from a
/// prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    /// Answer list for list-valued datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
}

impl Prediction {
    pub fn text_only(id: impl Into<String>, text: impl Into<String>) -> Self {
        Prediction {
            id: id.into(),
            text: text.into(),
            score: 0.0,
            chunk_index: None,
            start: None,
            end: None,
            answers: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_examples: usize,
    pub em: f64,
    pub token_f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_f1: Option<f64>,
    pub n_missing_predictions: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_source: BTreeMap<String, MetricsReport>,
}

/// Source tag used for per-source breakdowns: the id namespace before the
/// first `:`, else the `dataset` metadata entry, else `default`.
pub fn source_of(example: &UniformExample) -> String {
    if let Some((ns, _)) = example.id.split_once(':') {
        return String::from(ns);
    }
    example
        .metadata
        .get("dataset")
        .cloned()
        .unwrap_or_else(|| String::from("default"))
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    missing: usize,
    em: f64,
    f1: f64,
    list: (f64, f64, f64),
}

impl Accumulator {
    fn report(&self, with_list: bool) -> MetricsReport {
        let n = self.n.max(1) as f64;
        let list = |v: f64| with_list.then_some(v / n);
        MetricsReport {
            n_examples: self.n,
            em: self.em / n,
            token_f1: self.f1 / n,
            list_precision: list(self.list.0),
            list_recall: list(self.list.1),
            list_f1: list(self.list.2),
            n_missing_predictions: self.missing,
            per_source: BTreeMap::new(),
        }
    }
}

/// Scores `predictions` against `dataset`.
///
/// Examples without a prediction score 0 and are counted as missing. List
/// metrics are reported when any prediction carries an answer list; other
/// predictions then count as the singleton list of their text.
pub fn evaluate(predictions: &[Prediction], dataset: &[UniformExample]) -> Result<MetricsReport> {
    let mut by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    let mut examples: BTreeMap<&str, &UniformExample> = BTreeMap::new();
    for ex in dataset {
        if ex.answers.is_empty() {
            return Err(Error::InvalidRecord {
                id: ex.id.clone(),
                reason: String::from("cannot evaluate an example without gold answers"),
            });
        }
        if examples.insert(ex.id.as_str(), ex).is_some() {
            return Err(Error::DuplicateId(ex.id.clone()));
        }
    }
    if let Some(id) = by_id.keys().find(|id| !examples.contains_key(*id)) {
        return Err(Error::UnknownId(String::from(*id)));
    }
    let with_list = predictions.iter().any(|p| p.answers.is_some());

    let mut total = Accumulator::default();
    let mut per_source: BTreeMap<String, Accumulator> = BTreeMap::new();
    // Id order makes the floating-point sums independent of dataset order.
    for (id, ex) in &examples {
        let source = per_source.entry(source_of(ex)).or_default();
        let (em, f1, list) = match by_id.get(id) {
            None => {
                total.missing += 1;
                source.missing += 1;
                (0.0, 0.0, (0.0, 0.0, 0.0))
            }
            Some(p) => {
                let list = if with_list {
                    match &p.answers {
                        Some(answers) => list_prf(answers, &ex.answers)?,
                        None => list_prf(core::slice::from_ref(&p.text), &ex.answers)?,
                    }
                } else {
                    (0.0, 0.0, 0.0)
                };
                (
                    exact_match(&p.text, &ex.answers)?,
                    token_f1(&p.text, &ex.answers)?,
                    list,
                )
            }
        };
        for acc in [&mut total, source] {
            acc.n += 1;
            acc.em += em;
            acc.f1 += f1;
            acc.list.0 += list.0;
            acc.list.1 += list.1;
            acc.list.2 += list.2;
        }
    }

    let mut report = total.report(with_list);
    report.per_source = per_source
        .into_iter()
        .map(|(k, acc)| (k, acc.report(with_list)))
        .collect();
    Ok(report)
}
