//! Independent oracles and fixture builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::Rng;
use relprop::corpus::CorpusTag;
use relprop::features::{FeatureVector, MentionKind};
use relprop::Mention;

/// Fixtures live in the core crate; the CLI acceptance tests share them.
pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn mention(id: &str, corpus: CorpusTag, features: &[(&str, u32)]) -> Mention {
    Mention {
        mention_id: id.into(),
        doc_id: id.split(':').next().unwrap_or(id).into(),
        title_entity: "drug".into(),
        section_title: "uses".into(),
        corpus,
        kind: MentionKind::Singleton,
        item_surfaces: vec![id.into()],
        features: FeatureVector {
            counts: features.iter().map(|(f, c)| (f.to_string(), *c)).collect(),
        },
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        assert!(d.abs() > 1e-300, "singular system");
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / d;
            if f == 0.0 {
                continue;
            }
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Stationary PPR vector from `(I − (1−α)Tᵀ) p = α s`, with `T` the
/// row-normalized weight matrix over `nodes`.
pub fn ppr_solve(
    nodes: &[String],
    edges: &[(String, String, f64)],
    seeds: &BTreeSet<String>,
    alpha: f64,
) -> BTreeMap<String, f64> {
    let n = nodes.len();
    let idx: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut w = vec![vec![0.0; n]; n];
    for (a, b, x) in edges {
        let (i, j) = (idx[a.as_str()], idx[b.as_str()]);
        w[i][j] += x;
        w[j][i] += x;
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for (i, row) in w.iter().enumerate() {
        let deg: f64 = row.iter().sum();
        for (j, x) in row.iter().enumerate() {
            if *x > 0.0 {
                // column i of Tᵀ is row i of T
                a[j][i] -= (1.0 - alpha) * x / deg;
            }
        }
    }
    let b: Vec<f64> = nodes
        .iter()
        .map(|s| if seeds.contains(s) { alpha / seeds.len() as f64 } else { 0.0 })
        .collect();
    let p = solve_dense(a, b);
    nodes.iter().cloned().zip(p).collect()
}

/// A random connected bipartite graph with at most `max_nodes` nodes, as
/// `(mention, feature, weight)` edges, plus a random non-empty seed set.
pub fn random_bipartite(rng: &mut impl Rng, max_nodes: usize) -> (Vec<(String, String, f64)>, BTreeSet<String>) {
    let total = rng.gen_range(2..=max_nodes);
    let m = rng.gen_range(1..total);
    let f = total - m;
    let mention = |i: usize| format!("m{i:02}");
    let feature = |i: usize| format!("f{i:02}");
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    // spanning tree: every new node attaches to an existing node of the other side
    pairs.insert((0, 0));
    let (mut placed_m, mut placed_f) = (1, 1);
    while placed_m < m || placed_f < f {
        let add_mention = placed_f == f || (placed_m < m && rng.gen_bool(0.5));
        if add_mention {
            pairs.insert((placed_m, rng.gen_range(0..placed_f)));
            placed_m += 1;
        } else {
            pairs.insert((rng.gen_range(0..placed_m), placed_f));
            placed_f += 1;
        }
    }
    let extra = rng.gen_range(0..=m * f / 2);
    for _ in 0..extra {
        pairs.insert((rng.gen_range(0..m), rng.gen_range(0..f)));
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| (mention(i), feature(j), rng.gen_range(0.05..5.0)))
        .collect();
    let k = rng.gen_range(1..=m.min(4));
    let seeds = rand::seq::index::sample(rng, m, k).into_iter().map(mention).collect();
    (edges, seeds)
}

/// Node order used by `BipartiteGraph`: mentions then features, each sorted.
pub fn node_order(edges: &[(String, String, f64)]) -> Vec<String> {
    let ms: BTreeSet<&String> = edges.iter().map(|e| &e.0).collect();
    let fs: BTreeSet<&String> = edges.iter().map(|e| &e.1).collect();
    ms.into_iter().chain(fs).cloned().collect()
}

/// Dense example for the hinge oracle.
pub struct DenseExample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// `λ/2 (‖w‖² + b²) + mean hinge`, written out independently.
pub fn primal_objective(w: &[f64], b: f64, data: &[DenseExample], lambda: f64) -> f64 {
    let reg = lambda / 2.0 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = data
        .iter()
        .map(|e| {
            let margin: f64 = w.iter().zip(&e.x).map(|(a, b)| a * b).sum::<f64>() + b;
            (1.0 - e.y * margin).max(0.0)
        })
        .sum();
    reg + loss / data.len() as f64
}

/// Batch solver for the same objective: accelerated projected gradient on
/// the box-constrained dual `max Σα − ½αᵀQα`, `0 ≤ α ≤ 1/(λn)`,
/// `Q_ij = y_i y_j (x_i·x_j + 1)`. Returns `(w, b, primal, dual)`.
pub fn hinge_oracle(data: &[DenseExample], lambda: f64, iters: usize) -> (Vec<f64>, f64, f64, f64) {
    let n = data.len();
    let dim = data[0].x.len();
    let upper = 1.0 / (lambda * n as f64);
    let q: Vec<Vec<f64>> = data
        .iter()
        .map(|a| {
            data.iter()
                .map(|b| a.y * b.y * (a.x.iter().zip(&b.x).map(|(u, v)| u * v).sum::<f64>() + 1.0))
                .collect()
        })
        .collect();
    // Frobenius norm bounds the largest eigenvalue
    let lip: f64 = q.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| 1.0 - q[i].iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
            .collect()
    };
    let mut alpha = vec![0.0; n];
    let mut y = alpha.clone();
    let mut t = 1.0_f64;
    for _ in 0..iters {
        let g = grad(&y);
        let next: Vec<f64> = y.iter().zip(&g).map(|(v, d)| (v + d / lip).clamp(0.0, upper)).collect();
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
            .collect();
        alpha = next;
        t = t_next;
    }
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for (a, e) in alpha.iter().zip(data) {
        for (wj, xj) in w.iter_mut().zip(&e.x) {
            *wj += a * e.y * xj;
        }
        b += a * e.y;
    }
    let norm2 = w.iter().map(|v| v * v).sum::<f64>() + b * b;
    let dual = lambda * (alpha.iter().sum::<f64>() - norm2 / 2.0);
    (w.clone(), b, primal_objective(&w, b, data, lambda), dual)
}

/// The linearly separable toy problem: positives carry `tok=nausea`,
/// negatives never do. `x0`..`x2` occur in both classes.
pub fn separable_toy() -> (Vec<&'static str>, Vec<(Vec<&'static str>, bool)>) {
    let vocab = vec!["bow=cause", "bow=store", "tok=nausea", "tok=tablet", "x0", "x1", "x2"];
    let shared = ["x0", "x1", "x2"];
    let mut rows = Vec::new();
    for i in 0..10 {
        rows.push((vec!["tok=nausea", "bow=cause", shared[i % 3]], true));
        rows.push((vec!["tok=tablet", "bow=store", shared[i % 3]], false));
    }
    (vocab, rows)
}

pub fn dense_rows(vocab: &[&str], rows: &[(Vec<&str>, bool)]) -> Vec<DenseExample> {
    // unit rows, as the learner normalizes its inputs
    rows.iter()
        .map(|(feats, pos)| {
            let scale = 1.0 / (feats.len() as f64).sqrt();
            DenseExample {
                x: vocab.iter().map(|v| if feats.contains(v) { scale } else { 0.0 }).collect(),
                y: if *pos { 1.0 } else { -1.0 },
            }
        })
        .collect()
}

/// `(mention, feature, tf·ln(M/df))` for every feature with `df < M`.
pub fn tfidf_edges(mentions: &[Mention]) -> Vec<(String, String, f64)> {
    let total = mentions.len() as f64;
    let mut edges = Vec::new();
    for m in mentions {
        for (f, tf) in &m.features.counts {
            let df = mentions.iter().filter(|o| o.features.counts.contains_key(f)).count() as f64;
            if df < total {
                edges.push((m.mention_id.clone(), f.clone(), *tf as f64 * (total / df).ln()));
            }
        }
    }
    edges
}

pub struct LabelingFixture {
    pub docs: Vec<relprop::Document>,
    pub mentions: Vec<Mention>,
    pub schema: relprop::RelationSchema,
    pub triples: Vec<relprop::Triple>,
}

pub fn labeling_fixture() -> LabelingFixture {
    let dir = fixture_dir("labeling");
    let docs = relprop::corpus::ingest_corpus(dir.join("structured.jsonl"), CorpusTag::Structured).unwrap();
    let schema = relprop::kb::load_schema(dir.join("schema.json")).unwrap();
    let triples = relprop::kb::load_triples(dir.join("triples.tsv"), &schema).unwrap();
    let mentions = relprop::features::corpus_mentions(&docs, &Default::default()).unwrap();
    LabelingFixture {
        docs,
        mentions,
        schema,
        triples,
    }
}

/// Hand-enumerated `Rs` of the labeling fixture with sections enforced.
pub const FIXTURE_RS: [(&str, &str); 5] = [
    ("s1:0:0:L2-6", "usedToTreat"),
    ("s1:1:0:L4-9", "sideEffect"),
    ("s1:1:1:0-1", "sideEffect"),
    ("s2:0:0:2-3", "usedToTreat"),
    ("s2:1:0:3-4", "sideEffect"),
];

/// Matches the section constraint removes: headache under Uses, nausea
/// under Overdose, fever under Warnings.
pub const FIXTURE_OFF_SECTION: [(&str, &str); 3] = [
    ("s1:0:1:3-4", "sideEffect"),
    ("s1:2:0:4-5", "sideEffect"),
    ("s2:2:0:6-7", "usedToTreat"),
];

pub type EvalCase = (
    Vec<relprop::Prediction<f64>>,
    Vec<relprop::GoldAnnotation>,
    BTreeSet<String>,
);

/// Random predictions and gold over a small key space. Scores come from a
/// coarse grid, so ties and a threshold of exactly 0.5 both occur.
pub fn random_eval_case(rng: &mut impl Rng) -> EvalCase {
    let docs: BTreeSet<String> = (0..rng.gen_range(1..5)).map(|d| format!("d{d}")).collect();
    let doc_list: Vec<&String> = docs.iter().collect();
    let key = |rng: &mut dyn rand::RngCore| {
        (
            doc_list[rng.gen_range(0..doc_list.len())].clone(),
            format!("r{}", rng.gen_range(0..3)),
            format!("v{}", rng.gen_range(0..6)),
        )
    };
    let gold_count = rng.gen_range(1..12);
    let gold = (0..gold_count)
        .map(|_| {
            let (doc_id, relation, value) = key(rng);
            relprop::GoldAnnotation { doc_id, relation, value }
        })
        .collect();
    let pred_count = rng.gen_range(0..16);
    let predictions = (0..pred_count)
        .map(|_| {
            let (doc_id, relation, value) = key(rng);
            relprop::Prediction {
                doc_id,
                relation,
                value,
                score: rng.gen_range(0..=10) as f64 / 10.0,
            }
        })
        .collect();
    (predictions, gold, docs)
}

/// Exact metric identities and PR-curve properties for one case.
pub fn check_metric_identities(case: &EvalCase) -> Result<(), String> {
    use num_rational::Rational64;
    use relprop::eval::{evaluate, pr_curve, Prf};
    let (predictions, gold, docs) = case;
    let report = evaluate::<f64, Rational64>(predictions, gold, docs).map_err(|e| e.to_string())?;
    let zero = Rational64::from_integer(0);
    let one = Rational64::from_integer(1);
    let two = Rational64::from_integer(2);
    let all = std::iter::once(&report.micro)
        .chain(std::iter::once(&report.macro_avg))
        .chain(report.per_relation.values());
    for prf in all {
        let Prf { precision: p, recall: r, f1, .. } = prf;
        for v in [p, r, f1] {
            if *v < zero || *v > one {
                return Err(format!("metric {v} outside [0, 1]"));
            }
        }
        if *f1 * (*p + *r) != two * *p * *r {
            return Err(format!("F1 {f1} is not the harmonic mean of {p} and {r}"));
        }
    }

    let points = pr_curve(predictions, gold);
    for pair in points.windows(2) {
        if pair[1].recall < pair[0].recall {
            return Err(format!("recall fell from {} to {}", pair[0].recall, pair[1].recall));
        }
        if pair[1].threshold >= pair[0].threshold {
            return Err("thresholds not strictly descending".into());
        }
    }
    for point in &points {
        let kept: Vec<relprop::Prediction<f64>> =
            predictions.iter().filter(|p| p.score >= point.threshold).cloned().collect();
        let at = evaluate::<f64, Rational64>(&kept, gold, docs).map_err(|e| e.to_string())?;
        let (p, r) = (at.micro.precision, at.micro.recall);
        let to_f64 = |x: Rational64| *x.numer() as f64 / *x.denom() as f64;
        if point.precision != to_f64(p) || point.recall != to_f64(r) {
            return Err(format!("PR point at {} disagrees with evaluate", point.threshold));
        }
    }
    Ok(())
}
