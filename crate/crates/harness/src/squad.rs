//! Adapter for the nested article / paragraph / qa schema.

use std::collections::BTreeMap;
use std::path::Path;

use readcomp_core::corpus::{Document, SourceTag, UniformExample};
use serde::Deserialize;

use crate::error::{HarnessError, Result};

#[derive(Deserialize)]
struct File {
    #[serde(default)]
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    #[serde(default)]
    title: Option<String>,
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<Answer>,
}

#[derive(Deserialize)]
struct Answer {
    text: String,
}

/// Splits whose records must carry at least one answer.
fn requires_answers(split: &str) -> bool {
    !matches!(split, "test" | "blind")
}

pub fn ingest_squad_schema(path: &Path, split_label: &str) -> Result<Vec<UniformExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ingest_squad_str(&text, path, split_label)
}

/// Parses an in-memory file; `path` only labels errors.
pub fn ingest_squad_str(text: &str, path: &Path, split_label: &str) -> Result<Vec<UniformExample>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let file: File = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (a, article) in file.data.into_iter().enumerate() {
        for (p, paragraph) in article.paragraphs.into_iter().enumerate() {
            for (q, qa) in paragraph.qas.into_iter().enumerate() {
                let locus = format!("data[{a}].paragraphs[{p}].qas[{q}] (id `{}`)", qa.id);
                let fail = |message: &str| HarnessError::Record {
                    path: path.to_path_buf(),
                    locus: locus.clone(),
                    message: message.to_string(),
                };
                if qa.question.trim().is_empty() {
                    return Err(fail("empty question"));
                }
                let mut answers: Vec<String> = Vec::new();
                for ans in qa.answers {
                    if !answers.contains(&ans.text) {
                        answers.push(ans.text);
                    }
                }
                if answers.is_empty() && requires_answers(split_label) {
                    return Err(fail("no answers"));
                }
                let mut metadata = BTreeMap::new();
                metadata.insert("split".to_string(), split_label.to_string());
                if let Some(title) = &article.title {
                    metadata.insert("article".to_string(), title.clone());
                }
                let ex = UniformExample {
                    id: qa.id,
                    question: qa.question,
                    documents: vec![Document {
                        title: article.title.clone(),
                        text: paragraph.context.clone(),
                        source_tag: SourceTag::Wikipedia,
                    }],
                    answers,
                    metadata,
                };
                ex.validate().map_err(|e| fail(&e.to_string()))?;
                out.push(ex);
            }
        }
    }
    Ok(out)
}
