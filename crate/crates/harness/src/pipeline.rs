//! Reproducible experiment runs: every artifact of a config lands under
//! `<runs_dir>/<name>/` together with a manifest of content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use readcomp_core::analysis::{
    build_matrix, emit_layout_svg, emit_matrix_table, force_graph, layout_forces, savings_at, LearningCurve,
};
use readcomp_core::corpus::{generate_synthetic, SynthFamilyConfig, UniformExample};
use readcomp_core::derive_seed;
use readcomp_core::metrics::{evaluate, MetricsReport, Prediction};
use readcomp_core::model::{predict, train, LinearSpanModel, TrainConfig};
use readcomp_core::preprocess::{preprocess_example, PreprocessConfig, ProcessedExample};
use readcomp_core::sampler::{mix, MixPart};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{
    resolve, CurveSpec, DatasetSpec, EvalSplit, ExperimentConfig, ExperimentSpec, FileFormat, MatrixMetric,
};
use crate::error::{in_stage, HarnessError, Result};
use crate::formats::{
    read_uniform, write_curve_csv, write_json, write_predictions, write_processed, write_results_csv, write_text,
    write_uniform,
};
use crate::squad::ingest_squad_schema;

pub const RUNS_DIR_ENV: &str = "READCOMP_RUNS_DIR";
pub const WORKERS_ENV: &str = "READCOMP_WORKERS";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub runs_dir: PathBuf,
    pub workers: usize,
    /// Directory that relative input paths in the config are resolved against.
    pub base_dir: PathBuf,
}

impl RunOptions {
    /// Defaults from the environment: runs under `./runs`, one worker.
    pub fn from_env() -> Self {
        RunOptions {
            runs_dir: std::env::var_os(RUNS_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from),
            workers: workers_from_env().unwrap_or(1),
            base_dir: PathBuf::from("."),
        }
    }
}

pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub status: String,
    pub seed: u64,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub stages: Vec<StageTiming>,
    pub files: Vec<FileEntry>,
}

/// One evaluation row of the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub experiment: String,
    pub target: String,
    pub split: EvalSplit,
    pub n_examples: usize,
    pub em: f64,
    pub token_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub experiment: String,
    pub provenance: Vec<String>,
    pub n_train: usize,
    pub n_dev: usize,
    pub history: Vec<f64>,
    pub best_epoch: usize,
    pub skipped_unanswerable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub curve: String,
    pub points: Vec<(usize, f64)>,
    pub fraction: f64,
    pub n_needed: usize,
    pub fraction_of_max_n: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Per-example map over a worker pool; output keeps input order.
pub fn parallel_map<T, U, F>(pool: &rayon::ThreadPool, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    pool.install(|| items.par_iter().map(f).collect())
}

pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))
}

pub fn preprocess_all(
    pool: &rayon::ThreadPool,
    examples: &[UniformExample],
    cfg: &PreprocessConfig,
) -> Vec<ProcessedExample> {
    parallel_map(pool, examples, |e| preprocess_example(e, cfg))
}

pub fn predict_all(
    pool: &rayon::ThreadPool,
    model: &LinearSpanModel,
    examples: &[ProcessedExample],
) -> Result<Vec<Prediction>> {
    parallel_map(pool, examples, |e| predict(model, e).map(Prediction::from))
        .into_iter()
        .map(|r| r.map_err(HarnessError::from))
        .collect()
}

#[derive(Default)]
struct Split {
    raw: Vec<UniformExample>,
    processed: Vec<ProcessedExample>,
}

#[derive(Default)]
struct Dataset {
    train: Split,
    dev: Split,
    test: Option<Split>,
}

impl Dataset {
    fn eval(&self, split: EvalSplit) -> Option<&Split> {
        match split {
            EvalSplit::Dev => Some(&self.dev),
            EvalSplit::Test => self.test.as_ref(),
        }
    }
}

struct Run<'a> {
    config: &'a ExperimentConfig,
    opts: &'a RunOptions,
    dir: PathBuf,
    pool: rayon::ThreadPool,
    stages: Vec<StageTiming>,
    datasets: BTreeMap<String, Dataset>,
    models: BTreeMap<String, LinearSpanModel>,
    evaluations: Vec<EvalSummary>,
    trainings: Vec<TrainSummary>,
}

/// Executes every stage of `config` and returns the run directory.
///
/// An existing run directory of the same name is replaced; a directory
/// without a manifest is never touched.
pub fn run_pipeline(config: &ExperimentConfig, opts: &RunOptions) -> Result<PathBuf> {
    config.validate()?;
    let dir = opts.runs_dir.join(&config.name);
    if dir.exists() {
        if !dir.join(MANIFEST).exists() {
            return Err(HarnessError::Config(format!(
                "{} exists and is not a run directory",
                dir.display()
            )));
        }
        fs::remove_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;

    let config_text = config.to_toml()?;
    write_text(&dir.join("config.toml"), &config_text)?;
    let mut manifest = Manifest {
        name: config.name.clone(),
        status: "incomplete".into(),
        seed: config.seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        failed_stage: None,
        error: None,
        stages: Vec::new(),
        files: Vec::new(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;

    let mut run = Run {
        config,
        opts,
        dir: dir.clone(),
        pool: worker_pool(opts.workers)?,
        stages: Vec::new(),
        datasets: BTreeMap::new(),
        models: BTreeMap::new(),
        evaluations: Vec::new(),
        trainings: Vec::new(),
    };
    let outcome = run.execute();
    manifest.stages = std::mem::take(&mut run.stages);
    match &outcome {
        Ok(()) => manifest.status = "complete".into(),
        Err(e) => {
            manifest.failed_stage = e.stage().map(str::to_string);
            manifest.error = Some(e.to_string());
        }
    }
    manifest.files = hash_files(&dir)?;
    write_json(&dir.join(MANIFEST), &manifest)?;
    outcome.map(|()| dir)
}

/// Every file under `dir` except the manifest, sorted by relative path.
pub fn hash_files(dir: &Path) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
            let path = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).unwrap_or(&path);
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if rel == MANIFEST {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
            out.push(FileEntry {
                path: rel,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

impl Run<'_> {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = in_stage(name, f(self));
        self.stages.push(StageTiming {
            stage: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        r
    }

    fn execute(&mut self) -> Result<()> {
        let config = self.config;
        for spec in &config.datasets {
            self.stage(&format!("load:{}", spec.name), |run| run.load(spec))?;
        }
        self.stage("preprocess", Run::preprocess)?;
        for spec in &config.experiments {
            self.stage(&format!("train:{}", spec.name), |run| run.train_experiment(spec))?;
            self.stage(&format!("evaluate:{}", spec.name), |run| run.evaluate_experiment(spec))?;
        }
        write_json(&self.dir.join("metrics.json"), &self.evaluations)?;
        write_json(&self.dir.join("training.json"), &self.trainings)?;
        let mut curves = Vec::new();
        for spec in &config.curves {
            curves.push(self.stage(&format!("curve:{}", spec.name), |run| run.curve(spec))?);
        }
        if !curves.is_empty() {
            write_json(&self.dir.join("analysis/savings.json"), &curves)?;
        }
        self.stage("analysis", Run::analysis)
    }

    fn load(&mut self, spec: &DatasetSpec) -> Result<()> {
        let mut ds = Dataset::default();
        if let Some(s) = &spec.synth {
            let mut family = SynthFamilyConfig::preset(&s.family, s.seed.unwrap_or(self.config.seed))
                .ok_or_else(|| HarnessError::Config(format!("unknown synthetic family `{}`", s.family)))?;
            family.family_id = spec.name.clone();
            if let Some(d) = s.distractors {
                family.distractor_documents = d;
            }
            let mut all = generate_synthetic(&family, s.train + s.dev + s.test)?;
            let test = all.split_off(s.train + s.dev);
            let dev = all.split_off(s.train);
            ds.train.raw = all;
            ds.dev.raw = dev;
            ds.test = (s.test > 0).then(|| Split {
                raw: test,
                ..Default::default()
            });
        } else if let Some(f) = &spec.files {
            let read = |p: &str, split: &str| -> Result<Vec<UniformExample>> {
                let path = resolve(&self.opts.base_dir, p);
                match f.format {
                    FileFormat::Uniform => read_uniform(&path),
                    FileFormat::Squad => ingest_squad_schema(&path, split),
                }
            };
            ds.train.raw = read(&f.train, "train")?;
            ds.dev.raw = read(&f.dev, "dev")?;
            if let Some(t) = &f.test {
                ds.test = Some(Split {
                    raw: read(t, "test")?,
                    ..Default::default()
                });
            }
        }
        for split in [&mut ds.train, &mut ds.dev].into_iter().chain(ds.test.as_mut()) {
            for ex in &mut split.raw {
                ex.metadata.insert("dataset".into(), spec.name.clone());
            }
        }
        for (label, split) in [("train", &ds.train), ("dev", &ds.dev)]
            .into_iter()
            .chain(ds.test.as_ref().map(|t| ("test", t)))
        {
            if label != "test" {
                if let Some(ex) = split.raw.iter().find(|e| e.answers.is_empty()) {
                    return Err(HarnessError::Record {
                        path: PathBuf::from(format!("{}.{label}", spec.name)),
                        locus: format!("id `{}`", ex.id),
                        message: "labeled split example without answers".into(),
                    });
                }
            }
            write_uniform(&self.dir.join(format!("data/{}.{label}.jsonl", spec.name)), &split.raw)?;
        }
        self.datasets.insert(spec.name.clone(), ds);
        Ok(())
    }

    fn preprocess(&mut self) -> Result<()> {
        let cfg = self.config.preprocess;
        for (name, ds) in &mut self.datasets {
            for (label, split) in [("train", &mut ds.train), ("dev", &mut ds.dev)]
                .into_iter()
                .chain(ds.test.as_mut().map(|t| ("test", t)))
            {
                split.processed = preprocess_all(&self.pool, &split.raw, &cfg);
                write_processed(
                    &self.dir.join(format!("processed/{name}.{label}.jsonl")),
                    &split.processed,
                )?;
            }
        }
        Ok(())
    }

    /// Namespaced training and dev mixtures for `train` with a per-part cap.
    fn mixture(
        &self,
        names: &[String],
        take: Option<usize>,
        salt: u64,
    ) -> Result<(Vec<ProcessedExample>, Vec<ProcessedExample>)> {
        let seed = derive_seed(self.config.seed, salt);
        let mut train_parts = Vec::new();
        let mut dev_parts = Vec::new();
        for name in names {
            let ds = &self.datasets[name];
            let t = take.unwrap_or(ds.train.raw.len());
            let d = ((t as f64 * self.config.mix.dev_fraction).round() as usize).clamp(1, ds.dev.raw.len().max(1));
            train_parts.push(MixPart {
                tag: name,
                examples: &ds.train.raw,
                take: t,
            });
            dev_parts.push(MixPart {
                tag: name,
                examples: &ds.dev.raw,
                take: d.min(ds.dev.raw.len()),
            });
        }
        let shuffle = self.config.mix.shuffle;
        let train_mix = mix(&train_parts, seed, shuffle)?;
        let dev_mix = if dev_parts.iter().any(|p| p.take == 0) {
            Vec::new()
        } else {
            mix(&dev_parts, derive_seed(seed, 1), shuffle)?
        };
        let lookup = |mixed: &[UniformExample], dev: bool| -> Vec<ProcessedExample> {
            let mut index: BTreeMap<(&str, &str), &ProcessedExample> = BTreeMap::new();
            for name in names {
                let split = if dev {
                    &self.datasets[name].dev
                } else {
                    &self.datasets[name].train
                };
                for p in &split.processed {
                    index.insert((name.as_str(), p.id.as_str()), p);
                }
            }
            mixed
                .iter()
                .map(|ex| {
                    let (tag, id) = ex.id.split_once(':').expect("mixed ids are namespaced");
                    let mut p = index[&(tag, id)].clone();
                    p.id.clone_from(&ex.id);
                    p
                })
                .collect()
        };
        Ok((lookup(&train_mix, false), lookup(&dev_mix, true)))
    }

    fn train_model(
        &self,
        label: &str,
        train_set: &[ProcessedExample],
        dev_set: &[ProcessedExample],
        init: Option<&str>,
    ) -> Result<(LinearSpanModel, TrainSummary)> {
        let init_model = init.map(|n| &self.models[n]);
        let cfg = TrainConfig {
            seed: derive_seed(self.config.seed, self.config.train.seed),
            ..self.config.train
        };
        let outcome = train(train_set, dev_set, &cfg, init_model)?;
        let summary = TrainSummary {
            experiment: label.to_string(),
            provenance: outcome.model.provenance.clone(),
            n_train: train_set.len(),
            n_dev: dev_set.len(),
            history: outcome.history,
            best_epoch: outcome.best_epoch,
            skipped_unanswerable: outcome.skipped_unanswerable,
        };
        Ok((outcome.model, summary))
    }

    fn train_experiment(&mut self, spec: &ExperimentSpec) -> Result<()> {
        let salt = self
            .config
            .experiments
            .iter()
            .position(|e| e.name == spec.name)
            .unwrap_or(0) as u64;
        let (train_set, dev_set) = self.mixture(&spec.train, spec.take, salt)?;
        let ids: Vec<&str> = train_set.iter().map(|e| e.id.as_str()).collect();
        write_text(
            &self.dir.join(format!("mixes/{}.train.txt", spec.name)),
            &(ids.join("\n") + "\n"),
        )?;
        let (model, summary) = self.train_model(&spec.name, &train_set, &dev_set, spec.init.as_deref())?;
        write_json(&self.dir.join(format!("models/{}.json", spec.name)), &model)?;
        self.models.insert(spec.name.clone(), model);
        self.trainings.push(summary);
        Ok(())
    }

    fn evaluate_experiment(&mut self, spec: &ExperimentSpec) -> Result<()> {
        let model = &self.models[&spec.name];
        for target in &spec.evaluate {
            let split = self.datasets[target]
                .eval(spec.split)
                .ok_or_else(|| HarnessError::Config(format!("dataset `{target}` has no test split")))?;
            let predictions = predict_all(&self.pool, model, &split.processed)?;
            let report = evaluate(&predictions, &split.raw)?;
            write_predictions(
                &self.dir.join(format!("predictions/{}/{target}.jsonl", spec.name)),
                &predictions,
            )?;
            write_json(&self.dir.join(format!("reports/{}/{target}.json", spec.name)), &report)?;
            self.evaluations.push(EvalSummary {
                experiment: spec.name.clone(),
                target: target.clone(),
                split: spec.split,
                n_examples: report.n_examples,
                em: report.em,
                token_f1: report.token_f1,
            });
        }
        Ok(())
    }

    fn curve(&mut self, spec: &CurveSpec) -> Result<CurveSummary> {
        let ds = &self.datasets[&spec.dataset];
        let eval = ds
            .eval(spec.split)
            .ok_or_else(|| HarnessError::Config(format!("dataset `{}` has no test split", spec.dataset)))?;
        if let Some(&n) = spec.sizes.iter().find(|&&n| n > ds.train.processed.len()) {
            return Err(readcomp_core::Error::NotEnoughExamples {
                requested: n,
                available: ds.train.processed.len(),
            }
            .into());
        }
        let mut points = Vec::new();
        for &n in &spec.sizes {
            let label = format!("{}@{n}", spec.name);
            let (model, _) = self.train_model(
                &label,
                &ds.train.processed[..n],
                &ds.dev.processed,
                spec.init.as_deref(),
            )?;
            let predictions = predict_all(&self.pool, &model, &eval.processed)?;
            let report: MetricsReport = evaluate(&predictions, &eval.raw)?;
            points.push((n, 100.0 * report.em));
        }
        let curve = LearningCurve::new(points.clone())?;
        let (n_needed, fraction_of_max_n) = savings_at(&curve, spec.fraction)?;
        write_curve_csv(&self.dir.join(format!("analysis/curve_{}.csv", spec.name)), &points)?;
        Ok(CurveSummary {
            curve: spec.name.clone(),
            points,
            fraction: spec.fraction,
            n_needed,
            fraction_of_max_n,
        })
    }

    /// Matrix, forces and layout over single-source experiments trained
    /// from scratch.
    fn analysis(&mut self) -> Result<()> {
        let mut rows: Vec<(String, String, f64)> = Vec::new();
        for e in &self.evaluations {
            let spec = self
                .config
                .experiments
                .iter()
                .find(|s| s.name == e.experiment)
                .expect("known experiment");
            if spec.train.len() != 1 || spec.init.is_some() {
                continue;
            }
            let value = match self.config.analysis.metric {
                MatrixMetric::Em => e.em,
                MatrixMetric::TokenF1 => e.token_f1,
            };
            rows.push((spec.train[0].clone(), e.target.clone(), 100.0 * value));
        }
        if rows.is_empty() {
            return Ok(());
        }
        let a = self.dir.join("analysis");
        write_results_csv(&a.join("results.csv"), &rows)?;
        let m = build_matrix(&rows)?;
        write_json(&a.join("matrix.json"), &m)?;
        write_text(&a.join("matrix.txt"), &emit_matrix_table(&m))?;
        let g = force_graph(&m);
        write_json(&a.join("forces.json"), &g)?;
        if g.nodes.len() >= 2 {
            let layout = layout_forces(&g, &self.config.analysis.layout)?;
            write_json(&a.join("layout.json"), &layout)?;
            write_text(&a.join("layout.svg"), &emit_layout_svg(&layout, &g))?;
        }
        Ok(())
    }
}

/// Reads a completed run's manifest.
pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    crate::formats::read_json(&dir.join(MANIFEST))
}
