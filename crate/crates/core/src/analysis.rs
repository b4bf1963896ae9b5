//! Generalization matrices, pairwise dataset forces, force-directed layout,
//! learning curves and the example-savings statistic.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub source: String,
    pub target: String,
    pub value: f64,
}

/// EM percentages for training on `source` and evaluating on `target`.
/// Diagonal entries live in `self_values`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationMatrix {
    pub dataset_names: Vec<String>,
    pub values: Vec<MatrixEntry>,
    pub self_values: BTreeMap<String, f64>,
}

impl GeneralizationMatrix {
    pub fn get(&self, source: &str, target: &str) -> Option<f64> {
        if source == target {
            return self.self_values.get(source).copied();
        }
        self.values
            .iter()
            .find(|e| e.source == source && e.target == target)
            .map(|e| e.value)
    }
}

/// Assembles a matrix from `(source, target, em%)` triples. Names keep
/// first-appearance order; missing cells are allowed.
pub fn build_matrix<S: AsRef<str>>(results: &[(S, S, f64)]) -> Result<GeneralizationMatrix> {
    let mut m = GeneralizationMatrix::default();
    let mut seen = BTreeMap::new();
    for (source, target, value) in results {
        let (source, target) = (source.as_ref(), target.as_ref());
        if !(value.is_finite() && (0.0..=100.0).contains(value)) {
            return Err(Error::InvalidConfig(format!(
                "value {value} for ({source}, {target}) is outside [0, 100]"
            )));
        }
        if seen.insert((source.to_string(), target.to_string()), ()).is_some() {
            return Err(Error::DuplicateCell {
                from: source.to_string(),
                to: target.to_string(),
            });
        }
        for name in [source, target] {
            if !m.dataset_names.iter().any(|n| n == name) {
                m.dataset_names.push(name.to_string());
            }
        }
        if source == target {
            m.self_values.insert(source.to_string(), *value);
        } else {
            m.values.push(MatrixEntry {
                source: source.to_string(),
                target: target.to_string(),
                value: *value,
            });
        }
    }
    Ok(m)
}

fn self_value(m: &GeneralizationMatrix, d: &str) -> Result<f64> {
    match m.self_values.get(d) {
        Some(&v) if v > 0.0 => Ok(v),
        Some(_) => Err(Error::InvalidConfig(format!("self value of `{d}` must be positive"))),
        None => Err(Error::MissingValue(format!("self value of `{d}`"))),
    }
}

/// Force between two datasets: `P12/P2 + P21/P1` when both directions were
/// measured, `2 * P12 / P2` when only one was. Also returns whether only one
/// direction was available.
pub fn pair_force_directed(m: &GeneralizationMatrix, d1: &str, d2: &str) -> Result<(f64, bool)> {
    match (m.get(d1, d2), m.get(d2, d1)) {
        (Some(p12), Some(p21)) => Ok((p12 / self_value(m, d2)? + p21 / self_value(m, d1)?, false)),
        (Some(p12), None) => Ok((2.0 * p12 / self_value(m, d2)?, true)),
        (None, Some(p21)) => Ok((2.0 * p21 / self_value(m, d1)?, true)),
        (None, None) => Err(Error::MissingValue(format!("no cells between `{d1}` and `{d2}`"))),
    }
}

pub fn pair_force(m: &GeneralizationMatrix, d1: &str, d2: &str) -> Result<f64> {
    pair_force_directed(m, d1, d2).map(|(f, _)| f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceEdge {
    pub a: String,
    pub b: String,
    pub force: f64,
    /// Only one training direction was measured.
    pub directed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<ForceEdge>,
}

impl ForceGraph {
    pub fn validate(&self) -> Result<()> {
        let mut pairs = BTreeMap::new();
        for e in &self.edges {
            if !(e.force.is_finite() && e.force > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "force between `{}` and `{}` must be positive",
                    e.a, e.b
                )));
            }
            for n in [&e.a, &e.b] {
                if !self.nodes.contains(n) {
                    return Err(Error::InvalidConfig(format!("edge references unknown node `{n}`")));
                }
            }
            let key = if e.a <= e.b { (&e.a, &e.b) } else { (&e.b, &e.a) };
            if e.a == e.b || pairs.insert(key, ()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "duplicate or self edge `{}`-`{}`",
                    e.a, e.b
                )));
            }
        }
        Ok(())
    }
}

/// Edges for every unordered pair whose force is computable and positive.
pub fn force_graph(m: &GeneralizationMatrix) -> ForceGraph {
    let mut g = ForceGraph {
        nodes: m.dataset_names.clone(),
        edges: Vec::new(),
    };
    for (i, a) in m.dataset_names.iter().enumerate() {
        for b in &m.dataset_names[i + 1..] {
            if let Ok((force, directed)) = pair_force_directed(m, a, b) {
                if force.is_finite() && force > 0.0 {
                    g.edges.push(ForceEdge {
                        a: a.clone(),
                        b: b.clone(),
                        force,
                        directed,
                    });
                }
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub iterations: usize,
    pub initial_temperature: f64,
    pub repulsion_constant: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        LayoutParams {
            iterations: 500,
            initial_temperature: 0.1,
            repulsion_constant: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub positions: Vec<NodePosition>,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub iterations_run: usize,
}

impl Layout {
    pub fn distance(&self, a: &str, b: &str) -> Option<f64> {
        let p = self.positions.iter().find(|p| p.name == a)?;
        let q = self.positions.iter().find(|p| p.name == b)?;
        Some(libm::hypot(p.x - q.x, p.y - q.y))
    }
}

const MIN_DIST: f64 = 1e-9;

struct Springs {
    /// `(i, j, force)` with `i < j`.
    edges: Vec<(usize, usize, f64)>,
    k: f64,
    repulsion: f64,
}

impl Springs {
    /// Potential whose negative gradient is the layout force: edges pull
    /// with `F d^2 / k`, every pair pushes with `c k^2 / d`.
    fn energy(&self, pos: &[(f64, f64)]) -> f64 {
        let mut e = 0.0;
        for &(i, j, f) in &self.edges {
            let d = dist(pos[i], pos[j]);
            e += f * d * d * d / (3.0 * self.k);
        }
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                e -= self.repulsion * self.k * self.k * libm::log(dist(pos[i], pos[j]));
            }
        }
        e
    }

    fn displacements(&self, pos: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut disp = alloc::vec![(0.0, 0.0); pos.len()];
        let kk = self.k * self.k;
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                if i == j {
                    continue;
                }
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = dist(pos[i], pos[j]);
                let push = self.repulsion * kk / d;
                disp[i].0 += dx / d * push;
                disp[i].1 += dy / d * push;
            }
        }
        for &(i, j, f) in &self.edges {
            let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
            let d = dist(pos[i], pos[j]);
            let pull = f * d * d / self.k;
            disp[i].0 -= dx / d * pull;
            disp[i].1 -= dy / d * pull;
            disp[j].0 += dx / d * pull;
            disp[j].1 += dy / d * pull;
        }
        disp
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    libm::hypot(a.0 - b.0, a.1 - b.1).max(MIN_DIST)
}

/// Fruchterman-Reingold style placement with spring strength proportional
/// to the edge force, `k^2/d` repulsion and linear cooling.
///
/// Each iteration moves every node along its net force, capped by the
/// current temperature. A move that would raise the total potential is
/// retried at half the step a few times and otherwise skipped, so the
/// energy never increases.
pub fn layout_forces(g: &ForceGraph, params: &LayoutParams) -> Result<Layout> {
    if g.nodes.len() < 2 {
        return Err(Error::InvalidConfig("layout needs at least two nodes".into()));
    }
    if !(params.initial_temperature.is_finite() && params.initial_temperature > 0.0)
        || !(params.repulsion_constant.is_finite() && params.repulsion_constant >= 0.0)
    {
        return Err(Error::InvalidConfig(
            "layout parameters must be finite and positive".into(),
        ));
    }
    g.validate()?;

    let n = g.nodes.len();
    let index = |name: &str| g.nodes.iter().position(|x| x == name).expect("validated");
    let springs = Springs {
        edges: g
            .edges
            .iter()
            .map(|e| {
                let (i, j) = (index(&e.a), index(&e.b));
                (i.min(j), i.max(j), e.force)
            })
            .collect(),
        k: libm::sqrt(1.0 / n as f64),
        repulsion: params.repulsion_constant,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let initial_energy = springs.energy(&pos);
    let mut energy = initial_energy;

    for it in 0..params.iterations {
        let temperature = params.initial_temperature * (1.0 - it as f64 / params.iterations as f64);
        let disp = springs.displacements(&pos);
        let mut scale = 1.0;
        for _ in 0..8 {
            let candidate: Vec<(f64, f64)> = pos
                .iter()
                .zip(&disp)
                .map(|(&(x, y), &(dx, dy))| {
                    let len = libm::hypot(dx, dy);
                    if len == 0.0 {
                        return (x, y);
                    }
                    let step = len.min(temperature) * scale / len;
                    (x + dx * step, y + dy * step)
                })
                .collect();
            let e = springs.energy(&candidate);
            if e.is_finite() && e <= energy {
                pos = candidate;
                energy = e;
                break;
            }
            scale *= 0.5;
        }
    }

    Ok(Layout {
        positions: g
            .nodes
            .iter()
            .zip(pos)
            .map(|(name, (x, y))| NodePosition {
                name: name.clone(),
                x,
                y,
            })
            .collect(),
        initial_energy,
        final_energy: energy,
        iterations_run: params.iterations,
    })
}

/// `(training examples, metric)` points with strictly increasing sizes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConfig("curve sizes must be strictly increasing".into()));
        }
        if points
            .iter()
            .any(|p| !(p.1.is_finite() && (0.0..=100.0).contains(&p.1)))
        {
            return Err(Error::InvalidConfig("curve metrics must lie in [0, 100]".into()));
        }
        Ok(LearningCurve { points })
    }
}

/// Smallest measured size reaching `fraction` of the metric at the largest
/// size, and that size as a fraction of the largest. No interpolation.
pub fn savings_at(curve: &LearningCurve, fraction: f64) -> Result<(usize, f64)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig("fraction must lie in (0, 1]".into()));
    }
    let &(max_n, final_metric) = curve
        .points
        .last()
        .ok_or_else(|| Error::MissingValue("empty learning curve".into()))?;
    let threshold = fraction * final_metric;
    let slack = 1e-9 * threshold.abs().max(1.0);
    let n_needed = curve
        .points
        .iter()
        .find(|p| p.1 >= threshold - slack)
        .map_or(max_n, |p| p.0);
    Ok((n_needed, n_needed as f64 / max_n as f64))
}

/// SVG drawing: one labeled circle per node, one line per edge with stroke
/// width proportional to its force.
pub fn emit_layout_svg(layout: &Layout, g: &ForceGraph) -> String {
    const SIZE: f64 = 600.0;
    const MARGIN: f64 = 60.0;
    let xs = layout.positions.iter().map(|p| p.x);
    let ys = layout.positions.iter().map(|p| p.y);
    let (min_x, max_x) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (min_y, max_y) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let span = (max_x - min_x).max(max_y - min_y).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let place = |p: &NodePosition| (MARGIN + (p.x - min_x) * scale, MARGIN + (p.y - min_y) * scale);
    let find = |name: &str| layout.positions.iter().find(|p| p.name == name);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for e in &g.edges {
        if let (Some(a), Some(b)) = (find(&e.a), find(&e.b)) {
            let ((x1, y1), (x2, y2)) = (place(a), place(b));
            let dash = if e.directed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = writeln!(
                out,
                "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"#888888\" stroke-width=\"{:.2}\"{dash}/>",
                2.0 * e.force
            );
        }
    }
    for p in &layout.positions {
        let (x, y) = place(p);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"9\" fill=\"#3b6ea5\"/>");
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
            x + 12.0,
            y + 5.0,
            xml_escape(&p.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Aligned text table: rows are training sets, columns evaluation sets,
/// diagonal and unmeasured cells shown as `-`, followed by a `Self` row.
pub fn emit_matrix_table(m: &GeneralizationMatrix) -> String {
    let names = &m.dataset_names;
    let row_label_width = names.iter().map(String::len).chain([4]).max().unwrap_or(4);
    let col_width = names.iter().map(String::len).chain([5]).max().unwrap_or(5);
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));

    let mut out = String::new();
    let _ = write!(out, "{:<w$}", "", w = row_label_width);
    for n in names {
        let _ = write!(out, "  {n:>col_width$}");
    }
    out.push('\n');
    for source in names {
        let _ = write!(out, "{source:<row_label_width$}");
        for target in names {
            let v = if source == target { None } else { m.get(source, target) };
            let _ = write!(out, "  {:>col_width$}", cell(v));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<row_label_width$}", "Self");
    for n in names {
        let _ = write!(out, "  {:>col_width$}", cell(m.self_values.get(n).copied()));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn matrix_assembly_and_duplicates() {
        let m = build_matrix(&[("A", "A", 80.0), ("A", "B", 30.0), ("B", "A", 40.0), ("B", "B", 60.0)]).unwrap();
        assert_eq!(m.dataset_names, vec!["A", "B"]);
        assert_eq!(m.get("A", "B"), Some(30.0));
        assert_eq!(m.get("B", "B"), Some(60.0));
        let diag = build_matrix(&[("A", "A", 80.0), ("B", "B", 60.0)]).unwrap();
        assert!(diag.values.is_empty());
        assert_eq!(diag.self_values.len(), 2);
        assert!(matches!(
            build_matrix(&[("A", "B", 1.0), ("A", "B", 2.0)]),
            Err(Error::DuplicateCell { .. })
        ));
        assert!(build_matrix(&[("A", "B", 101.0)]).is_err());
    }

    #[test]
    fn force_formula_cases() {
        let m = build_matrix(&[("A", "A", 50.0), ("B", "B", 40.0), ("A", "B", 40.0), ("B", "A", 50.0)]).unwrap();
        assert_eq!(pair_force(&m, "A", "B").unwrap(), 2.0);
        let one_way = build_matrix(&[("A", "A", 50.0), ("B", "B", 40.0), ("A", "B", 10.0)]).unwrap();
        assert_eq!(pair_force_directed(&one_way, "A", "B").unwrap(), (0.5, true));
        assert_eq!(pair_force_directed(&one_way, "B", "A").unwrap(), (0.5, true));
        let no_self = build_matrix(&[("A", "B", 10.0), ("B", "A", 10.0)]).unwrap();
        assert!(matches!(pair_force(&no_self, "A", "B"), Err(Error::MissingValue(_))));
        let none = build_matrix(&[("A", "A", 10.0), ("B", "B", 10.0)]).unwrap();
        assert!(matches!(pair_force(&none, "A", "B"), Err(Error::MissingValue(_))));
    }

    #[test]
    fn savings_examples() {
        let curve = LearningCurve::new(vec![(1000, 40.0), (2000, 57.0), (3000, 60.0)]).unwrap();
        let (n, frac) = savings_at(&curve, 0.95).unwrap();
        assert_eq!(n, 2000);
        assert!((frac - 2.0 / 3.0).abs() < 1e-15);
        let flat = LearningCurve::new(vec![(10, 30.0), (20, 30.0), (40, 30.0)]).unwrap();
        assert_eq!(savings_at(&flat, 0.95).unwrap(), (10, 0.25));
        let single = LearningCurve::new(vec![(500, 12.0)]).unwrap();
        assert_eq!(savings_at(&single, 0.5).unwrap(), (500, 1.0));
        assert!(savings_at(&LearningCurve::default(), 0.9).is_err());
        assert!(savings_at(&curve, 0.0).is_err());
        assert!(LearningCurve::new(vec![(2, 1.0), (2, 3.0)]).is_err());
    }

    fn pair_graph(force: f64) -> ForceGraph {
        ForceGraph {
            nodes: vec!["A".into(), "B".into()],
            edges: vec![ForceEdge {
                a: "A".into(),
                b: "B".into(),
                force,
                directed: false,
            }],
        }
    }

    #[test]
    fn layout_rejects_bad_input() {
        let mut g = pair_graph(1.0);
        g.nodes.pop();
        assert!(layout_forces(&g, &LayoutParams::default()).is_err());
        let g = pair_graph(1.0);
        let bad = LayoutParams {
            initial_temperature: f64::NAN,
            ..Default::default()
        };
        assert!(layout_forces(&g, &bad).is_err());
        assert!(layout_forces(&pair_graph(0.0), &LayoutParams::default()).is_err());
    }

    #[test]
    fn svg_counts_elements() {
        let g = pair_graph(1.5);
        let layout = layout_forces(&g, &LayoutParams::default()).unwrap();
        let svg = emit_layout_svg(&layout, &g);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<line").count(), 1);
        assert!(svg.contains("stroke-width=\"3.00\""));
    }

    #[test]
    fn matrix_table_marks_missing_cells() {
        let m = build_matrix(&[("A", "A", 80.0), ("A", "B", 30.0), ("B", "B", 60.0)]).unwrap();
        let table = emit_matrix_table(&m);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with('A') && lines[1].ends_with("30.0"));
        assert_eq!(lines[2].split_whitespace().collect::<Vec<_>>(), vec!["B", "-", "-"]);
        assert_eq!(
            lines[3].split_whitespace().collect::<Vec<_>>(),
            vec!["Self", "80.0", "60.0"]
        );
    }
}
