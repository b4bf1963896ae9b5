//! On-disk formats: JSON Lines for examples and predictions, JSON for
//! models, reports and analysis objects, CSV for curves and result lists.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use readcomp_core::corpus::{validate_dataset, UniformExample};
use readcomp_core::metrics::Prediction;
use readcomp_core::model::LinearSpanModel;
use readcomp_core::preprocess::ProcessedExample;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{HarnessError, Result};

/// Parsed records with the 1-based line each came from. Blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e)),
        _ => Ok(()),
    }
}

fn check_unique<'a>(path: &Path, ids: impl Iterator<Item = (usize, &'a str)>) -> Result<()> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (line, id) in ids {
        if let Some(&first) = seen.get(id) {
            return Err(HarnessError::DuplicateId {
                path: path.to_path_buf(),
                id: id.to_string(),
                first,
                second: line,
            });
        }
        seen.insert(id, line);
    }
    Ok(())
}

/// Loads and validates a uniform-format file.
pub fn read_uniform(path: &Path) -> Result<Vec<UniformExample>> {
    let records: Vec<(usize, UniformExample)> = read_jsonl(path)?;
    for (line, ex) in &records {
        ex.validate().map_err(|e| HarnessError::Record {
            path: path.to_path_buf(),
            locus: format!("line {line} (id `{}`)", ex.id),
            message: e.to_string(),
        })?;
    }
    check_unique(path, records.iter().map(|(l, e)| (*l, e.id.as_str())))?;
    Ok(records.into_iter().map(|(_, e)| e).collect())
}

pub fn write_uniform(path: &Path, examples: &[UniformExample]) -> Result<()> {
    validate_dataset(examples)?;
    write_jsonl(path, examples)
}

pub fn read_processed(path: &Path) -> Result<Vec<ProcessedExample>> {
    let records: Vec<(usize, ProcessedExample)> = read_jsonl(path)?;
    check_unique(path, records.iter().map(|(l, e)| (*l, e.id.as_str())))?;
    Ok(records.into_iter().map(|(_, e)| e).collect())
}

pub fn write_processed(path: &Path, examples: &[ProcessedExample]) -> Result<()> {
    write_jsonl(path, examples)
}

/// Loads a prediction file. Ids must be unique; when `dataset` is given
/// every id must belong to it.
pub fn read_predictions(path: &Path, dataset: Option<&[UniformExample]>) -> Result<Vec<Prediction>> {
    let records: Vec<(usize, Prediction)> = read_jsonl(path)?;
    check_unique(path, records.iter().map(|(l, p)| (*l, p.id.as_str())))?;
    if let Some(dataset) = dataset {
        let known: std::collections::BTreeSet<&str> = dataset.iter().map(|e| e.id.as_str()).collect();
        if let Some((line, p)) = records.iter().find(|(_, p)| !known.contains(p.id.as_str())) {
            return Err(HarnessError::Record {
                path: path.to_path_buf(),
                locus: format!("line {line}"),
                message: format!("prediction for unknown id `{}`", p.id),
            });
        }
    }
    Ok(records.into_iter().map(|(_, p)| p).collect())
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    write_jsonl(path, predictions)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::io(path, e.into()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_model(path: &Path) -> Result<LinearSpanModel> {
    let model: LinearSpanModel = read_json(path)?;
    model.check_schema()?;
    if let Some((name, _)) = model.weights.iter().find(|(_, w)| !w.is_finite()) {
        return Err(HarnessError::Record {
            path: path.to_path_buf(),
            locus: format!("weight `{name}`"),
            message: "non-finite weight".into(),
        });
    }
    Ok(model)
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

/// Learning-curve points from a `n,metric` CSV with a header row.
pub fn read_curve_csv(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize::<(usize, f64)>()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn write_curve_csv(path: &Path, points: &[(usize, f64)]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["n", "metric"]).map_err(|e| csv_error(path, e))?;
    for (n, m) in points {
        w.serialize((n, m)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// `(source, target, em)` rows from a `source,target,em` CSV with a header.
pub fn read_results_csv(path: &Path) -> Result<Vec<(String, String, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize::<(String, String, f64)>()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

pub fn write_results_csv(path: &Path, rows: &[(String, String, f64)]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["source", "target", "em"])
        .map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use readcomp_core::corpus::{generate_synthetic, SynthFamilyConfig};

    #[test]
    fn uniform_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let examples = generate_synthetic(&SynthFamilyConfig::preset("C", 1).unwrap(), 100).unwrap();
        write_uniform(&path, &examples).unwrap();
        assert_eq!(read_uniform(&path).unwrap(), examples);
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains("\"title\""));
    }

    #[test]
    fn duplicate_ids_name_both_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let line = r#"{"id":"q1","question":"who?","documents":[{"text":"x","source_tag":"other"}],"answers":["x"]}"#;
        fs::write(&path, format!("{line}\n\n{line}\n")).unwrap();
        match read_uniform(&path).unwrap_err() {
            HarnessError::DuplicateId { id, first, second, .. } => {
                assert_eq!((id.as_str(), first, second), ("q1", 1, 3))
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn record_errors_name_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        fs::write(
            &path,
            r#"{"id":"q7","question":"  ","documents":[{"text":"x","source_tag":"news"}],"answers":[]}"#,
        )
        .unwrap();
        let err = read_uniform(&path).unwrap_err().to_string();
        assert!(err.contains("q7") && err.contains("empty question"), "{err}");
        fs::write(&path, "{\"id\": 3}\n").unwrap();
        assert!(matches!(read_uniform(&path), Err(HarnessError::Parse { line: 1, .. })));
        fs::write(
            &path,
            r#"{"id":"a","question":"q","documents":[{"text":"x","source_tag":"web"}],"answers":[]}"#,
        )
        .unwrap();
        assert!(read_uniform(&path).is_err());
    }

    #[test]
    fn predictions_round_trip_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        let preds = vec![
            Prediction {
                chunk_index: Some(0),
                start: Some(2),
                end: Some(3),
                ..Prediction::text_only("a", "x y")
            },
            Prediction::text_only("b", "z"),
        ];
        write_predictions(&path, &preds).unwrap();
        assert_eq!(read_predictions(&path, None).unwrap(), preds);
        let first = fs::read_to_string(&path).unwrap();
        assert!(first.starts_with(r#"{"id":"a","text":"x y","score":"#));

        let dataset = generate_synthetic(&SynthFamilyConfig::preset("A", 0).unwrap(), 2).unwrap();
        let err = read_predictions(&path, Some(&dataset)).unwrap_err().to_string();
        assert!(err.contains("unknown id `a`"), "{err}");

        fs::write(&path, format!("{}{}", first.lines().next().unwrap(), "\n").repeat(2)).unwrap();
        let err = read_predictions(&path, None).unwrap_err().to_string();
        assert!(err.contains("`a`") && err.contains("1 and 2"), "{err}");
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let curve = dir.path().join("c.csv");
        write_curve_csv(&curve, &[(100, 40.5), (200, 57.0)]).unwrap();
        assert_eq!(read_curve_csv(&curve).unwrap(), vec![(100, 40.5), (200, 57.0)]);
        let results = dir.path().join("r.csv");
        let rows = vec![("A".to_string(), "B".to_string(), 31.8)];
        write_results_csv(&results, &rows).unwrap();
        assert_eq!(read_results_csv(&results).unwrap(), rows);
        fs::write(&results, "source,target,em\nA,B,oops\n").unwrap();
        assert!(matches!(
            read_results_csv(&results),
            Err(HarnessError::Parse { line: 2, .. })
        ));
    }
}
