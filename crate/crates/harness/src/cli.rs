//! `readcomp` command line. Every failure prints one JSON line on stderr
//! and exits nonzero.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use readcomp_core::analysis::{
    build_matrix, emit_layout_svg, emit_matrix_table, force_graph, layout_forces, savings_at, ForceGraph,
    GeneralizationMatrix, LayoutParams, LearningCurve,
};
use readcomp_core::corpus::{generate_synthetic, SynthFamilyConfig, UniformExample};
use readcomp_core::metrics::evaluate;
use readcomp_core::model::{train, LinearSpanModel, TrainConfig};
use readcomp_core::preprocess::{GoldTarget, PreprocessConfig};
use readcomp_core::sampler::{mix, MixPart};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::formats::{
    read_curve_csv, read_json, read_model, read_predictions, read_processed, read_results_csv, read_uniform,
    write_json, write_predictions, write_processed, write_text, write_uniform,
};
use crate::pipeline::{
    predict_all, preprocess_all, run_pipeline, worker_pool, workers_from_env, RunOptions, RUNS_DIR_ENV,
};
use crate::squad::ingest_squad_schema;

#[derive(Parser, Debug)]
#[command(
    name = "readcomp",
    version,
    about = "Multi-dataset extractive reading-comprehension harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert an external dataset file to the uniform JSON Lines format.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset family.
    Synth(SynthArgs),
    /// Chunk, rank and mark gold spans.
    Preprocess(PreprocessArgs),
    /// Build a mixture from several uniform files.
    Mix(MixArgs),
    /// Train a span model from scratch.
    Train(TrainArgs),
    /// Continue training from an existing model.
    Finetune(FinetuneArgs),
    /// Write one prediction per processed example.
    Predict(PredictArgs),
    /// Score a prediction file against a uniform dataset.
    Evaluate(EvaluateArgs),
    /// Assemble a generalization matrix from `source,target,em` rows.
    Matrix(MatrixArgs),
    /// Pairwise dataset forces from a matrix.
    Force(ForceArgs),
    /// Two-dimensional placement of a force graph.
    Layout(LayoutArgs),
    /// Example-savings statistic of a learning curve.
    Curve(CurveArgs),
    /// Run a full experiment from a config file.
    Run(RunArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum InputFormat {
    Squad,
    Uniform,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long, value_enum, default_value = "squad")]
    pub format: InputFormat,
    /// Split label; `test` and `blind` allow examples without answers.
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Preset family: A, B, C or H.
    #[arg(long)]
    pub family: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub n: usize,
    #[arg(long)]
    pub distractors: Option<usize>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct WorkerArgs {
    /// Parallel workers; defaults to READCOMP_WORKERS or 1.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl WorkerArgs {
    fn count(&self) -> usize {
        self.workers.or_else(workers_from_env).unwrap_or(1)
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum GoldMode {
    FirstGlobal,
    PerChunk,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = PreprocessConfig::default().max_len)]
    pub max_len: usize,
    #[arg(long, default_value_t = PreprocessConfig::default().max_chunks_kept)]
    pub max_chunks: usize,
    #[arg(long, value_enum, default_value = "first-global")]
    pub gold_target: GoldMode,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Args, Debug)]
pub struct MixArgs {
    /// `tag=path:take`, repeatable.
    #[arg(long = "part", required = true)]
    pub parts: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_shuffle: bool,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainFlags {
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_span_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainFlags {
    fn apply(&self, mut c: TrainConfig) -> TrainConfig {
        c.learning_rate = self.learning_rate.unwrap_or(c.learning_rate);
        c.l2 = self.l2.unwrap_or(c.l2);
        c.max_epochs = self.max_epochs.unwrap_or(c.max_epochs);
        c.patience = self.patience.unwrap_or(c.patience);
        c.max_span_len = self.max_span_len.unwrap_or(c.max_span_len);
        c.seed = self.seed.unwrap_or(c.seed);
        c
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Processed training file.
    #[arg(long)]
    pub train: PathBuf,
    /// Processed dev file used for early stopping.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub init: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Processed examples.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Uniform dataset with gold answers.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    /// CSV with header `source,target,em`.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the aligned text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ForceArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct LayoutArgs {
    #[arg(long)]
    pub forces: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value_t = LayoutParams::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = LayoutParams::default().initial_temperature)]
    pub initial_temperature: f64,
    #[arg(long, default_value_t = LayoutParams::default().repulsion_constant)]
    pub repulsion_constant: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CurveArgs {
    /// CSV with header `n,metric`.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub fraction: f64,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `key.path=value` override, repeatable; wins over the file.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    /// Root for run directories.
    #[arg(long, env = RUNS_DIR_ENV, default_value = "runs")]
    pub runs_dir: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let line = serde_json::json!({"error": "usage", "message": e.to_string().lines().next().unwrap_or("")});
            eprintln!("{line}");
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            1
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => {
            let examples = match a.format {
                InputFormat::Squad => ingest_squad_schema(&a.input, &a.split)?,
                InputFormat::Uniform => read_uniform(&a.input)?,
            };
            write_uniform(&a.output, &examples)?;
            println!("{} examples", examples.len());
        }
        Command::Synth(a) => {
            let mut cfg = SynthFamilyConfig::preset(&a.family, a.seed)
                .ok_or_else(|| HarnessError::Config(format!("unknown synthetic family `{}`", a.family)))?;
            if let Some(d) = a.distractors {
                cfg.distractor_documents = d;
            }
            let examples = generate_synthetic(&cfg, a.n)?;
            write_uniform(&a.output, &examples)?;
            println!("{} examples", examples.len());
        }
        Command::Preprocess(a) => {
            let cfg = PreprocessConfig {
                max_len: a.max_len,
                max_chunks_kept: a.max_chunks,
                gold_target: match a.gold_target {
                    GoldMode::FirstGlobal => GoldTarget::FirstGlobal,
                    GoldMode::PerChunk => GoldTarget::PerChunk,
                },
            };
            cfg.validate()?;
            let examples = read_uniform(&a.input)?;
            let processed = preprocess_all(&worker_pool(a.workers.count())?, &examples, &cfg);
            write_processed(&a.output, &processed)?;
            let unanswerable = processed
                .iter()
                .filter(|p| !p.answers.is_empty() && !p.has_gold())
                .count();
            println!("{} examples, {unanswerable} without a marked answer", processed.len());
        }
        Command::Mix(a) => {
            let mut loaded: Vec<(String, Vec<UniformExample>, usize)> = Vec::new();
            for spec in &a.parts {
                loaded.push(parse_part(spec)?);
            }
            let parts: Vec<MixPart<'_>> = loaded
                .iter()
                .map(|(tag, ex, take)| MixPart {
                    tag,
                    examples: ex,
                    take: *take,
                })
                .collect();
            let mixed = mix(&parts, a.seed, !a.no_shuffle)?;
            write_uniform(&a.output, &mixed)?;
            println!("{} examples", mixed.len());
        }
        Command::Train(a) => run_train(&a, None)?,
        Command::Finetune(a) => {
            let init = read_model(&a.init)?;
            run_train(&a.train, Some(&init))?;
        }
        Command::Predict(a) => {
            let model = read_model(&a.model)?;
            let examples = read_processed(&a.input)?;
            let preds = predict_all(&worker_pool(a.workers.count())?, &model, &examples)?;
            write_predictions(&a.output, &preds)?;
            println!("{} predictions", preds.len());
        }
        Command::Evaluate(a) => {
            let dataset = read_uniform(&a.dataset)?;
            let preds = read_predictions(&a.predictions, Some(&dataset))?;
            let report = evaluate(&preds, &dataset)?;
            if let Some(out) = &a.output {
                write_json(out, &report)?;
            }
            println!(
                "n={} em={:.2} f1={:.2} missing={}",
                report.n_examples,
                100.0 * report.em,
                100.0 * report.token_f1,
                report.n_missing_predictions
            );
            for (source, sub) in &report.per_source {
                println!(
                    "  {source}: n={} em={:.2} f1={:.2}",
                    sub.n_examples,
                    100.0 * sub.em,
                    100.0 * sub.token_f1
                );
            }
        }
        Command::Matrix(a) => {
            let rows = read_results_csv(&a.results)?;
            let m = build_matrix(&rows)?;
            write_json(&a.output, &m)?;
            let table = emit_matrix_table(&m);
            match &a.table {
                Some(p) => write_text(p, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Force(a) => {
            let m: GeneralizationMatrix = read_json(&a.matrix)?;
            let g = force_graph(&m);
            write_json(&a.output, &g)?;
            for e in &g.edges {
                println!(
                    "{} {} {:.4}{}",
                    e.a,
                    e.b,
                    e.force,
                    if e.directed { " (one direction)" } else { "" }
                );
            }
        }
        Command::Layout(a) => {
            let g: ForceGraph = read_json(&a.forces)?;
            g.validate()?;
            let params = LayoutParams {
                iterations: a.iterations,
                initial_temperature: a.initial_temperature,
                repulsion_constant: a.repulsion_constant,
                seed: a.seed,
            };
            let layout = layout_forces(&g, &params)?;
            write_json(&a.output, &layout)?;
            if let Some(svg) = &a.svg {
                write_text(svg, &emit_layout_svg(&layout, &g))?;
            }
            println!("energy {:.6} -> {:.6}", layout.initial_energy, layout.final_energy);
        }
        Command::Curve(a) => {
            let curve = LearningCurve::new(read_curve_csv(&a.points)?)?;
            let (n, frac) = savings_at(&curve, a.fraction)?;
            println!("n_needed={n} fraction_of_max_n={frac:.4}");
        }
        Command::Run(a) => {
            let config = ExperimentConfig::load(&a.config, &a.overrides)?;
            let opts = RunOptions {
                runs_dir: a.runs_dir,
                workers: a.workers.count(),
                base_dir: a.config.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf),
            };
            let dir = run_pipeline(&config, &opts)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}

fn parse_part(spec: &str) -> Result<(String, Vec<UniformExample>, usize)> {
    let bad = || HarnessError::Config(format!("part `{spec}` is not tag=path:take"));
    let (tag, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (path, take) = rest.rsplit_once(':').ok_or_else(bad)?;
    let take: usize = take.parse().map_err(|_| bad())?;
    Ok((tag.to_string(), read_uniform(Path::new(path))?, take))
}

fn run_train(a: &TrainArgs, init: Option<&LinearSpanModel>) -> Result<()> {
    let config = a
        .flags
        .apply(init.map_or_else(TrainConfig::default, |m| m.train_config));
    let train_set = read_processed(&a.train)?;
    let dev_set = match &a.dev {
        Some(p) => read_processed(p)?,
        None => Vec::new(),
    };
    let outcome = train(&train_set, &dev_set, &config, init)?;
    write_json(&a.output, &outcome.model)?;
    let history: Vec<String> = outcome.history.iter().map(|h| format!("{:.2}", 100.0 * h)).collect();
    println!(
        "best epoch {} of {}, selection em [{}], {} skipped without gold",
        outcome.best_epoch,
        outcome.history.len() - 1,
        history.join(" "),
        outcome.skipped_unanswerable
    );
    Ok(())
}
