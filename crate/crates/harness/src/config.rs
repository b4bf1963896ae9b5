//! Experiment configuration: a TOML file plus `key.path=value` overrides.

use std::path::{Path, PathBuf};

use readcomp_core::analysis::LayoutParams;
use readcomp_core::model::TrainConfig;
use readcomp_core::preprocess::PreprocessConfig;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub mix: MixConfig,
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub experiments: Vec<ExperimentSpec>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub shuffle: bool,
    /// Dev examples taken per mixture part, as a fraction of its train take.
    pub dev_fraction: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            shuffle: true,
            dev_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<FileSource>,
}

/// A preset synthetic family split by prefix into train, dev and test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSource {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractors: Option<usize>,
    pub train: usize,
    pub dev: usize,
    #[serde(default)]
    pub test: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[default]
    Uniform,
    Squad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSource {
    #[serde(default)]
    pub format: FileFormat,
    pub train: String,
    pub dev: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    #[default]
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Training datasets; more than one builds a mixture.
    pub train: Vec<String>,
    /// Per-dataset cap on training examples; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub take: Option<usize>,
    /// Earlier experiment whose model initializes this one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default)]
    pub evaluate: Vec<String>,
    #[serde(default)]
    pub split: EvalSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub name: String,
    pub dataset: String,
    pub sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub split: EvalSplit,
}

fn default_fraction() -> f64 {
    0.95
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMetric {
    #[default]
    Em,
    TokenF1,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub metric: MatrixMetric,
    pub layout: LayoutParams,
}

fn is_safe_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key.path=value` overrides, then validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetSpec> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !is_safe_name(&self.name) {
            return bad(format!("name `{}` is not filesystem-safe", self.name));
        }
        self.preprocess.validate()?;
        self.train.validate()?;
        if !(self.mix.dev_fraction > 0.0 && self.mix.dev_fraction <= 1.0) {
            return bad("mix.dev_fraction must lie in (0, 1]".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.datasets {
            if !is_safe_name(&d.name) || d.name.contains(':') {
                return bad(format!("dataset name `{}` is not filesystem-safe", d.name));
            }
            if !names.insert(d.name.as_str()) {
                return bad(format!("dataset `{}` defined twice", d.name));
            }
            match (&d.synth, &d.files) {
                (Some(s), None) => {
                    if s.train == 0 || s.dev == 0 {
                        return bad(format!("dataset `{}` needs train and dev examples", d.name));
                    }
                }
                (None, Some(_)) => {}
                _ => return bad(format!("dataset `{}` needs exactly one of `synth` or `files`", d.name)),
            }
        }
        let known = |n: &str| names.contains(n);
        let mut experiments: Vec<&str> = Vec::new();
        for e in &self.experiments {
            if !is_safe_name(&e.name) {
                return bad(format!("experiment name `{}` is not filesystem-safe", e.name));
            }
            if experiments.contains(&e.name.as_str()) {
                return bad(format!("experiment `{}` defined twice", e.name));
            }
            if e.train.is_empty() {
                return bad(format!("experiment `{}` has no training datasets", e.name));
            }
            if let Some(missing) = e.train.iter().chain(&e.evaluate).find(|n| !known(n)) {
                return bad(format!(
                    "experiment `{}` references unknown dataset `{missing}`",
                    e.name
                ));
            }
            if e.take == Some(0) {
                return bad(format!("experiment `{}` has take = 0", e.name));
            }
            if let Some(init) = &e.init {
                if !experiments.contains(&init.as_str()) {
                    return bad(format!(
                        "experiment `{}` initializes from `{init}`, which is not an earlier experiment",
                        e.name
                    ));
                }
            }
            experiments.push(&e.name);
        }
        let mut curves = std::collections::BTreeSet::new();
        for c in &self.curves {
            if !is_safe_name(&c.name) || !curves.insert(c.name.as_str()) {
                return bad(format!("curve name `{}` is unsafe or repeated", c.name));
            }
            if !known(&c.dataset) {
                return bad(format!("curve `{}` references unknown dataset `{}`", c.name, c.dataset));
            }
            if c.sizes.is_empty() || c.sizes.windows(2).any(|w| w[0] >= w[1]) || c.sizes[0] == 0 {
                return bad(format!(
                    "curve `{}` sizes must be positive and strictly increasing",
                    c.name
                ));
            }
            if !(c.fraction > 0.0 && c.fraction <= 1.0) {
                return bad(format!("curve `{}` fraction must lie in (0, 1]", c.name));
            }
            if let Some(init) = &c.init {
                if !experiments.contains(&init.as_str()) {
                    return bad(format!(
                        "curve `{}` initializes from unknown experiment `{init}`",
                        c.name
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Input paths are resolved against the directory holding the config file.
pub fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Sets `a.b.0.c = value`; the value is parsed as a TOML literal and kept
/// as a string when that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let next_is_index = !last && parts[i + 1].parse::<usize>().is_ok();
        if last {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if next_is_index {
            let idx: usize = parts[i + 1].parse().unwrap();
            let arr = entry
                .as_array_mut()
                .ok_or_else(|| HarnessError::Config(format!("`{part}` is not an array in `{key}`")))?;
            let item = arr
                .get_mut(idx)
                .ok_or_else(|| HarnessError::Config(format!("index {idx} out of range in `{key}`")))?;
            if i + 2 == parts.len() {
                *item = value;
                return Ok(());
            }
            let rest = parts[i + 2..].join(".");
            let inner = item
                .as_table_mut()
                .ok_or_else(|| HarnessError::Config(format!("`{part}.{idx}` is not a table in `{key}`")))?;
            return apply_override(inner, &format!("{rest}={raw}"));
        }
        cur = entry
            .as_table_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{part}` is not a table in `{key}`")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "transfer"
seed = 3

[train]
max_epochs = 4
patience = 2

[[datasets]]
name = "A"
synth = { family = "A", train = 50, dev = 10 }

[[datasets]]
name = "B"
synth = { family = "B", train = 50, dev = 10, test = 10 }

[[experiments]]
name = "pre"
train = ["A"]
evaluate = ["A", "B"]

[[experiments]]
name = "ft"
train = ["B"]
take = 20
init = "pre"
evaluate = ["B"]
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::from_toml(BASE, &[]).unwrap();
        assert_eq!(c.train.max_epochs, 4);
        assert_eq!(c.train.learning_rate, TrainConfig::default().learning_rate);
        assert_eq!(c.preprocess, PreprocessConfig::default());
        assert_eq!(c.experiments[1].init.as_deref(), Some("pre"));
        assert_eq!(c.experiments[0].split, EvalSplit::Dev);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap(), &[]).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn overrides_win() {
        let c = ExperimentConfig::from_toml(
            BASE,
            &[
                "train.learning_rate=0.2".into(),
                "preprocess.gold_target=per_chunk".into(),
                "datasets.1.synth.train = 70".into(),
                "experiments.1.take=30".into(),
                "name=other".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.train.learning_rate, 0.2);
        assert_eq!(c.datasets[1].synth.as_ref().unwrap().train, 70);
        assert_eq!(c.experiments[1].take, Some(30));
        assert_eq!(c.name, "other");
        assert!(ExperimentConfig::from_toml(BASE, &["datasets.9.name=x".into()]).is_err());
        assert!(ExperimentConfig::from_toml(BASE, &["nonsense".into()]).is_err());
    }

    #[test]
    fn validation_errors() {
        let cases = [
            "name=../up",
            "train.patience=9",
            "experiments.1.init=ft",
            "experiments.0.evaluate=[\"Z\"]",
            "datasets.1.name=A",
            "mix.dev_fraction=0",
            "unknown_key=1",
        ];
        for case in cases {
            assert!(
                ExperimentConfig::from_toml(BASE, &[case.to_string()]).is_err(),
                "{case}"
            );
        }
    }
}
