//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits nonzero when any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use readcomp::config::ExperimentConfig;
use readcomp::pipeline::{predict_all, preprocess_all, run_pipeline, worker_pool, RunOptions};
use readcomp_core::analysis::{
    build_matrix, layout_forces, pair_force, savings_at, ForceEdge, ForceGraph, LayoutParams, LearningCurve,
};
use readcomp_core::corpus::{generate_synthetic, Document, SourceTag, SynthFamilyConfig, UniformExample};
use readcomp_core::derive_seed;
use readcomp_core::metrics::{evaluate, normalize_answer, Prediction};
use readcomp_core::model::{shared_norm_gradient, shared_norm_loss, train, CandidateSet, LinearSpanModel, TrainConfig};
use readcomp_core::preprocess::{
    preprocess_example, sort_chunks, split_paragraph, GoldTarget, PreprocessConfig, ProcessedExample,
};
use readcomp_core::sampler::{mix, MixPart};
use readcomp_core::text::{tokenize, TokenSeq};

const METRIC_TOL: f64 = 1e-9;
const FORCE_TOL: f64 = 1e-3;
const GRAD_REL_TOL: f64 = 1e-6;
const GRAD_STEP: f64 = 1e-5;
const MIX_MARGIN: f64 = 2.0;
const SELF_EM_MIN: f64 = 90.0;
const CROSS_GAP: f64 = 10.0;
const LAYOUT_RUNS: u64 = 100;
const DOMINANT_MIN: usize = 95;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn example(id: &str, text: &str, answers: &[&str]) -> UniformExample {
    UniformExample {
        id: id.to_string(),
        question: "q?".to_string(),
        documents: vec![Document {
            title: None,
            text: text.to_string(),
            source_tag: SourceTag::Wikipedia,
        }],
        answers: answers.iter().map(|s| s.to_string()).collect(),
        metadata: BTreeMap::new(),
    }
}

fn criterion_1() -> Outcome {
    // (id, prediction, golds, em, f1, list p, list r)
    let cases: Vec<(&str, Option<&str>, Vec<&str>, f64, f64, f64, f64)> = vec![
        ("X:1", Some("Obama"), vec!["Barack Obama"], 0.0, 2.0 / 3.0, 0.0, 0.0),
        ("X:2", Some("mat"), vec!["The Mat."], 1.0, 1.0, 1.0, 1.0),
        ("X:3", Some("mat"), vec!["rug", "the mat"], 1.0, 1.0, 1.0, 0.5),
        (
            "X:4",
            Some("york city hall"),
            vec!["New York City"],
            0.0,
            2.0 / 3.0,
            0.0,
            0.0,
        ),
        ("X:5", Some("in 1992"), vec!["1992"], 0.0, 2.0 / 3.0, 0.0, 0.0),
        ("X:6", Some("London"), vec!["Paris"], 0.0, 0.0, 0.0, 0.0),
        ("Y:7", Some("b c"), vec!["a b c d"], 0.0, 0.8, 0.0, 0.0),
        ("Y:8", Some("US army"), vec!["U.S. Army"], 1.0, 1.0, 1.0, 1.0),
        ("Y:9", Some("x y z w"), vec!["x y", "x y z"], 0.0, 6.0 / 7.0, 0.0, 0.0),
        ("Y:10", None, vec!["anything"], 0.0, 0.0, 0.0, 0.0),
        ("Y:11", Some("Red"), vec!["red", "blue"], 1.0, 1.0, 0.5, 0.5),
        ("Y:12", Some("cat cat"), vec!["cat"], 0.0, 2.0 / 3.0, 0.0, 0.0),
    ];
    let f1_of = |p: f64, r: f64| {
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    };
    let dataset: Vec<UniformExample> = cases.iter().map(|c| example(c.0, "ctx", &c.2)).collect();
    let predictions: Vec<Prediction> = cases
        .iter()
        .filter_map(|c| {
            let mut p = Prediction::text_only(c.0, c.1?);
            if c.0 == "Y:11" {
                p.answers = Some(vec!["Red".into(), "green".into()]);
            }
            Some(p)
        })
        .collect();
    let report = evaluate(&predictions, &dataset).map_err(|e| e.to_string())?;

    let agg = |ids: &dyn Fn(&str) -> bool| {
        let sel: Vec<_> = cases.iter().filter(|c| ids(c.0)).collect();
        let n = sel.len() as f64;
        let sum = |f: &dyn Fn(&&(&str, Option<&str>, Vec<&str>, f64, f64, f64, f64)) -> f64| {
            sel.iter().map(f).sum::<f64>() / n
        };
        (
            sum(&|c| c.3),
            sum(&|c| c.4),
            sum(&|c| c.5),
            sum(&|c| c.6),
            sum(&|c| f1_of(c.5, c.6)),
        )
    };
    let check_report = |label: &str, r: &readcomp_core::metrics::MetricsReport, e: (f64, f64, f64, f64, f64)| {
        let got = (
            r.em,
            r.token_f1,
            r.list_precision.unwrap_or(f64::NAN),
            r.list_recall.unwrap_or(f64::NAN),
            r.list_f1.unwrap_or(f64::NAN),
        );
        let pairs = [(got.0, e.0), (got.1, e.1), (got.2, e.2), (got.3, e.3), (got.4, e.4)];
        check(pairs.iter().all(|&(g, w)| close(g, w, METRIC_TOL)), || {
            format!("{label}: got {got:?}, expected {e:?}")
        })
    };
    check_report("overall", &report, agg(&|_| true))?;
    check(report.n_examples == 12 && report.n_missing_predictions == 1, || {
        format!("counts {} / {}", report.n_examples, report.n_missing_predictions)
    })?;
    for tag in ["X", "Y"] {
        let r = report
            .per_source
            .get(tag)
            .ok_or(format!("no per-source entry for {tag}"))?;
        check_report(tag, r, agg(&|id| id.starts_with(tag)))?;
    }
    Ok(format!(
        "12 cases, EM {:.4} F1 {:.4} within {METRIC_TOL:e}",
        report.em, report.token_f1
    ))
}

fn criterion_2() -> Outcome {
    let large = ["SQuAD", "NewsQA", "SearchQA", "TQA-G", "TQA-W", "HotpotQA"];
    let rows: [(&str, [Option<f64>; 6]); 7] = [
        (
            "SQuAD",
            [None, Some(31.8), Some(8.4), Some(37.8), Some(33.4), Some(11.8)],
        ),
        (
            "NewsQA",
            [Some(60.4), None, Some(10.1), Some(37.6), Some(28.4), Some(8.0)],
        ),
        (
            "SearchQA",
            [Some(23.3), Some(12.7), None, Some(53.2), Some(35.4), Some(5.2)],
        ),
        ("TQA-G", [Some(36.3), Some(18.8), Some(39.2), None, None, Some(8.8)]),
        ("TQA-W", [Some(35.5), Some(19.4), Some(27.8), None, None, Some(8.7)]),
        (
            "HotpotQA",
            [Some(54.5), Some(25.6), Some(19.6), Some(37.3), Some(34.9), None],
        ),
        (
            "self",
            [Some(78.0), Some(46.0), Some(52.2), Some(60.7), Some(50.1), Some(24.2)],
        ),
    ];
    let mut cells = Vec::new();
    for (src, vals) in rows {
        for (j, v) in vals.iter().enumerate() {
            if let Some(v) = v {
                let s = if src == "self" { large[j] } else { src };
                cells.push((s, large[j], *v));
            }
        }
    }
    let m = build_matrix(&cells).map_err(|e| e.to_string())?;
    for &(s, t, v) in &cells {
        check(m.get(s, t) == Some(v), || {
            format!("cell {s}->{t} is {:?}, entered {v}", m.get(s, t))
        })?;
    }
    let oracle = |ab: f64, aa: f64, ba: f64, bb: f64| ab / bb + ba / aa;
    let expected = [
        ("SQuAD", "NewsQA", 1.4657, oracle(31.8, 78.0, 60.4, 46.0)),
        ("SearchQA", "TQA-G", 1.6274, oracle(53.2, 52.2, 39.2, 60.7)),
    ];
    let mut shown = Vec::new();
    for (a, b, pinned, direct) in expected {
        let f = pair_force(&m, a, b).map_err(|e| e.to_string())?;
        let g = pair_force(&m, b, a).map_err(|e| e.to_string())?;
        check(close(f, pinned, FORCE_TOL) && close(f, direct, 1e-12) && f == g, || {
            format!("F({a},{b}) = {f}, reversed {g}, expected {pinned} / {direct}")
        })?;
        shown.push(format!("F({a},{b})={f:.4}"));
    }
    Ok(format!("{} cells verbatim, {}", cells.len(), shown.join(" ")))
}

fn oracle_cosine(question: &TokenSeq, pieces: &[TokenSeq]) -> Vec<f64> {
    let terms = |t: &TokenSeq| -> Vec<String> {
        t.tokens
            .iter()
            .filter(|w| w.chars().any(|c| c.is_alphanumeric()))
            .map(|w| w.to_lowercase())
            .collect()
    };
    let mut df: HashMap<String, f64> = HashMap::new();
    for p in pieces {
        for w in terms(p).into_iter().collect::<BTreeSet<_>>() {
            *df.entry(w).or_default() += 1.0;
        }
    }
    let n = pieces.len() as f64;
    let vector = |t: &TokenSeq| {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for w in terms(t) {
            *tf.entry(w).or_default() += 1.0;
        }
        tf.into_iter()
            .map(|(w, c)| {
                let idf = ((1.0 + n) / (1.0 + df.get(&w).copied().unwrap_or(0.0))).ln();
                (w, (1.0 + c.ln()) * idf)
            })
            .collect::<HashMap<_, _>>()
    };
    let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let q = vector(question);
    pieces
        .iter()
        .map(|p| {
            let v = vector(p);
            let (nq, nv) = (norm(&q), norm(&v));
            if nq == 0.0 || nv == 0.0 {
                return 0.0;
            }
            let dot: f64 = q.iter().filter_map(|(w, x)| v.get(w).map(|y| x * y)).sum();
            (dot / (nq * nv)).clamp(0.0, 1.0)
        })
        .collect()
}

fn contains_alias(chunk: &TokenSeq, alias: &str) -> bool {
    let words: Vec<String> = chunk
        .tokens
        .iter()
        .map(|t| normalize_answer(t))
        .filter(|t| !t.is_empty())
        .collect();
    let alias = normalize_answer(alias);
    let needle: Vec<&str> = alias.split(' ').filter(|s| !s.is_empty()).collect();
    !needle.is_empty()
        && words
            .windows(needle.len())
            .any(|w| w.iter().zip(&needle).all(|(a, b)| a == b))
}

fn criterion_3() -> Outcome {
    let mut corpus = Vec::new();
    for (i, fam) in ["A", "B", "C", "H"].into_iter().enumerate() {
        let cfg = SynthFamilyConfig::preset(fam, 31 + i as u64).ok_or("missing preset")?;
        corpus.extend(generate_synthetic(&cfg, 250).map_err(|e| e.to_string())?);
    }
    let config = PreprocessConfig {
        max_len: 48,
        max_chunks_kept: 1000,
        gold_target: GoldTarget::PerChunk,
    };
    let first: Vec<ProcessedExample> = corpus.iter().map(|e| preprocess_example(e, &config)).collect();
    let second: Vec<ProcessedExample> = corpus.iter().map(|e| preprocess_example(e, &config)).collect();
    check(first == second, || "preprocessing is not deterministic".into())?;

    let (mut n_chunks, mut n_alias_chunks) = (0, 0);
    for (ex, p) in corpus.iter().zip(&first) {
        let pieces: Vec<TokenSeq> = ex
            .documents
            .iter()
            .flat_map(|d| split_paragraph(&tokenize(&d.text), config.max_len))
            .collect();
        let ranked = sort_chunks(&tokenize(&ex.question), &pieces);
        let oracle = oracle_cosine(&tokenize(&ex.question), &pieces);
        check(ranked.windows(2).all(|w| w[0].1 >= w[1].1), || {
            format!("{}: pieces not sorted", ex.id)
        })?;
        check(ranked.iter().all(|&(i, s)| close(s, oracle[i], 1e-9)), || {
            format!("{}: similarity disagrees with the reference", ex.id)
        })?;
        check(p.chunks.windows(2).all(|w| w[0].similarity >= w[1].similarity), || {
            format!("{}: merged chunks out of order", ex.id)
        })?;
        let total: usize = pieces.iter().map(|t| t.len()).sum();
        let kept: usize = p.chunks.iter().map(|c| c.tokens.len()).sum();
        check(total == kept, || format!("{}: {kept} of {total} tokens kept", ex.id))?;
        for c in &p.chunks {
            n_chunks += 1;
            check(c.tokens.len() <= config.max_len, || {
                format!("{}: chunk of {} tokens", ex.id, c.tokens.len())
            })?;
            if ex.answers.iter().any(|a| contains_alias(&c.tokens, a)) {
                n_alias_chunks += 1;
                check(!c.gold_spans.is_empty(), || {
                    format!("{}: answer-bearing chunk unmarked", ex.id)
                })?;
            }
        }
    }
    Ok(format!(
        "{} examples, {n_chunks} chunks (max_len {}), {n_alias_chunks} answer-bearing all marked",
        corpus.len(),
        config.max_len
    ))
}

struct Family {
    train: Vec<UniformExample>,
    dev: Vec<UniformExample>,
    eval: Vec<UniformExample>,
}

fn family(name: &str) -> Result<Family, String> {
    let cfg = SynthFamilyConfig::preset(name, 7).ok_or("missing preset")?;
    let all = generate_synthetic(&cfg, 800).map_err(|e| e.to_string())?;
    Ok(Family {
        train: all[..500].to_vec(),
        dev: all[500..600].to_vec(),
        eval: all[600..].to_vec(),
    })
}

fn criterion_4() -> Outcome {
    let pool = worker_pool(4).map_err(|e| e.to_string())?;
    let pre = PreprocessConfig::default();
    let prep = |xs: &[UniformExample]| preprocess_all(&pool, xs, &pre);
    let em = |m: &LinearSpanModel, xs: &[UniformExample]| -> Result<f64, String> {
        let preds = predict_all(&pool, m, &prep(xs)).map_err(|e| e.to_string())?;
        Ok(100.0 * evaluate(&preds, xs).map_err(|e| e.to_string())?.em)
    };
    let fit = |tr: &[UniformExample], dev: &[UniformExample], init: Option<&LinearSpanModel>| {
        train(&prep(tr), &prep(dev), &TrainConfig::default(), init)
            .map(|o| o.model)
            .map_err(|e| e.to_string())
    };
    let (a, b, c) = (family("A")?, family("B")?, family("C")?);
    let model_a = fit(&a.train, &a.dev, None)?;
    let model_b = fit(&b.train, &b.dev, None)?;
    let self_a = em(&model_a, &a.eval)?;
    let a_on_b = em(&model_a, &b.eval)?;
    let self_b = em(&model_b, &b.eval)?;

    let scratch_b = fit(&b.train[..200], &b.dev, None)?;
    let tuned_b = fit(&b.train[..200], &b.dev, Some(&model_a))?;
    let (scratch, tuned) = (em(&scratch_b, &b.eval)?, em(&tuned_b, &b.eval)?);

    let part = |tag, examples, take| MixPart { tag, examples, take };
    let mixed_train = mix(&[part("A", &a.train, 250), part("B", &b.train, 250)], 7, true).map_err(|e| e.to_string())?;
    let mixed_dev = mix(&[part("A", &a.dev, 50), part("B", &b.dev, 50)], 7, false).map_err(|e| e.to_string())?;
    let mixed = fit(&mixed_train, &mixed_dev, None)?;
    let on_c = |m| em(m, &c.eval);
    let (mix_c, a_c, b_c) = (on_c(&mixed)?, on_c(&model_a)?, on_c(&model_b)?);
    let best_single = a_c.max(b_c);

    let detail = format!(
        "self A {self_a:.1}, A->B {a_on_b:.1} vs self B {self_b:.1}, B finetune {tuned:.1} vs scratch {scratch:.1}, \
         mix->C {mix_c:.1} vs best single {best_single:.1}"
    );
    check(self_a >= SELF_EM_MIN, || {
        format!("self A EM below {SELF_EM_MIN}: {detail}")
    })?;
    check(a_on_b <= self_b - CROSS_GAP, || {
        format!("cross-family gap under {CROSS_GAP}: {detail}")
    })?;
    check(tuned >= scratch, || format!("fine-tuning lost to scratch: {detail}"))?;
    check(mix_c >= best_single - MIX_MARGIN, || {
        format!("mixture below best single - {MIX_MARGIN}: {detail}")
    })?;
    Ok(detail)
}

fn criterion_5() -> Outcome {
    let curve = |pts: Vec<(usize, f64)>| LearningCurve::new(pts).map_err(|e| e.to_string());
    let (n, frac) =
        savings_at(&curve(vec![(1000, 40.0), (2000, 57.0), (3000, 60.0)])?, 0.95).map_err(|e| e.to_string())?;
    check(
        n == 2000 && frac == 2000.0 / 3000.0 && format!("{frac:.4}") == "0.6667",
        || format!("got ({n}, {frac})"),
    )?;
    let flat = savings_at(&curve(vec![(100, 50.0), (200, 50.0), (300, 50.0)])?, 0.95).map_err(|e| e.to_string())?;
    check(flat == (100, 100.0 / 300.0), || format!("flat curve gave {flat:?}"))?;
    let single = savings_at(&curve(vec![(500, 42.0)])?, 0.95).map_err(|e| e.to_string())?;
    check(single == (500, 1.0), || format!("single point gave {single:?}"))?;
    Ok(format!(
        "n_needed={n} fraction_of_max_n={frac:.4}; flat and single-point curves ok"
    ))
}

fn criterion_6() -> Outcome {
    let mut set = CandidateSet::new();
    set.push([(0u32, 1.0), (1, 0.5)]);
    set.push([(1u32, -1.0), (2, 2.0)]);
    set.push([(0u32, 0.3), (3, 1.5), (2, -0.7)]);
    let gold = [0usize, 2];
    let w = [0.2, -0.4, 0.1, 0.7];
    let l2 = 0.01;
    let grad = shared_norm_gradient(&w, &set, &gold, l2);
    let mut worst: f64 = 0.0;
    for k in 0..w.len() {
        let shifted = |h: f64| {
            let mut v = w;
            v[k] += h;
            shared_norm_loss(&v, &set, &gold, l2)
        };
        let numeric = (shifted(GRAD_STEP) - shifted(-GRAD_STEP)) / (2.0 * GRAD_STEP);
        let rel = (grad[k] - numeric).abs() / numeric.abs().max(grad[k].abs()).max(1e-12);
        worst = worst.max(rel);
    }
    check(worst < GRAD_REL_TOL, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e} < {GRAD_REL_TOL:e}"))
}

fn criterion_7() -> Outcome {
    let names = ["a", "b", "c", "d", "e"];
    let mut dominant = 0;
    for seed in 0..LAYOUT_RUNS {
        let params = LayoutParams {
            seed,
            ..LayoutParams::default()
        };
        let mut edges = Vec::new();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let force = if (i, j) == (0, 1) { 2.0 } else { 0.5 };
                edges.push(ForceEdge {
                    a: names[i].into(),
                    b: names[j].into(),
                    force,
                    directed: false,
                });
            }
        }
        let g = ForceGraph {
            nodes: names.iter().map(|s| s.to_string()).collect(),
            edges,
        };
        let layout = layout_forces(&g, &params).map_err(|e| e.to_string())?;
        check(layout.final_energy <= layout.initial_energy, || {
            format!("seed {seed}: energy rose")
        })?;
        let ab = layout.distance("a", "b").ok_or("missing node")?;
        let closest = g
            .edges
            .iter()
            .filter(|e| (e.a.as_str(), e.b.as_str()) != ("a", "b"))
            .all(|e| layout.distance(&e.a, &e.b).is_some_and(|d| d > ab));
        dominant += usize::from(closest);

        // A random complete graph per seed for the energy property.
        let mut edges = Vec::new();
        for i in 0..names.len() {
            for j in i + 1..names.len() {
                let r = derive_seed(seed, (i * 8 + j) as u64) % 1000;
                edges.push(ForceEdge {
                    a: names[i].into(),
                    b: names[j].into(),
                    force: 0.1 + r as f64 / 250.0,
                    directed: false,
                });
            }
        }
        let g = ForceGraph { nodes: g.nodes, edges };
        let layout = layout_forces(&g, &params).map_err(|e| e.to_string())?;
        check(layout.final_energy <= layout.initial_energy, || {
            format!("seed {seed}: energy rose on random graph")
        })?;
    }
    check(dominant >= DOMINANT_MIN, || {
        format!("dominant pair closest in {dominant}/{LAYOUT_RUNS}")
    })?;
    Ok(format!(
        "energy non-increasing on {} runs, dominant pair closest in {dominant}/{LAYOUT_RUNS}",
        2 * LAYOUT_RUNS
    ))
}

const RUN_CONFIG: &str = r#"
name = "repro"
seed = 11

[train]
max_epochs = 4
patience = 2

[[datasets]]
name = "A"
synth = { family = "A", train = 120, dev = 30 }

[[datasets]]
name = "B"
synth = { family = "B", train = 120, dev = 30 }

[[experiments]]
name = "on_A"
train = ["A"]
evaluate = ["A", "B"]

[[experiments]]
name = "on_B"
train = ["B"]
evaluate = ["A", "B"]

[[experiments]]
name = "mixed"
train = ["A", "B"]
take = 60
evaluate = ["A", "B"]
"#;

fn tree(dir: &Path, sub: &str) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.join(sub)];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in fs::read_dir(&p).map_err(|e| e.to_string())? {
                stack.push(e.map_err(|e| e.to_string())?.path());
            }
        } else {
            let rel = p.strip_prefix(dir).map_err(|e| e.to_string())?.display().to_string();
            out.insert(rel, fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn criterion_8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ExperimentConfig::from_toml(RUN_CONFIG, &[]).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (i, workers) in [1, 4].into_iter().enumerate() {
        let root = tmp.path().join(format!("run{i}"));
        let opts = RunOptions {
            runs_dir: root.clone(),
            workers,
            base_dir: root,
        };
        runs.push(run_pipeline(&config, &opts).map_err(|e| e.to_string())?);
    }
    let mut compared = 0;
    for sub in ["models", "predictions", "reports", "metrics.json"] {
        let (x, y) = (tree(&runs[0], sub)?, tree(&runs[1], sub)?);
        check(!x.is_empty(), || format!("no files under {sub}"))?;
        check(x == y, || format!("{sub} differs between runs"))?;
        compared += x.len();
    }
    Ok(format!(
        "{compared} model/prediction/metric files byte-identical across two runs"
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome, Duration); 8] = [
        (1, "metrics", criterion_1, Duration::from_secs(1)),
        (2, "force", criterion_2, Duration::from_secs(1)),
        (3, "preprocess", criterion_3, Duration::from_secs(10)),
        (4, "transfer", criterion_4, Duration::from_secs(120)),
        (5, "savings", criterion_5, Duration::from_secs(1)),
        (6, "gradient", criterion_6, Duration::from_secs(1)),
        (7, "layout", criterion_7, Duration::from_secs(30)),
        (8, "reproducibility", criterion_8, Duration::from_secs(120)),
    ];
    let mut failed = 0;
    for (n, name, f, budget) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|d| {
            if took <= budget {
                Ok(d)
            } else {
                Err(format!("{d}; exceeded {budget:?}"))
            }
        });
        match result {
            Ok(d) => println!("PASS criterion {n} ({name}): {d} [{:.2}s]", took.as_secs_f64()),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d} [{:.2}s]", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
