//! Extraction on held-out documents, query-level evaluation and the
//! distant-supervision baselines.
//!
//! A `(doc_id, relation)` pair is a query and extracted values are its
//! answers. A prediction is correct when `(doc_id, relation, value)` is in
//! the gold set; precision and recall pool these counts over all queries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::features::{document_mentions, FeatureConfig, Mention};
use crate::kb::RelationSchema;
use crate::mentions::MentionSets;
use crate::normalize::normalize;
use crate::scalar::{MetricValue, Scalar};
use crate::training::{fit_model, LinearModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction<T> {
    pub doc_id: String,
    pub relation: String,
    /// Normalized item surface.
    pub value: String,
    pub score: T,
}

fn check_config<T>(model: &LinearModel<T>, feature_config: &FeatureConfig) -> Result<()> {
    if model.header.feature_config != *feature_config {
        return Err(Error::FeatureConfigMismatch {
            model: format!("{:?}", model.header.feature_config),
            requested: format!("{feature_config:?}"),
        });
    }
    Ok(())
}

/// Best relation and its score for every mention, expanded to list items and
/// collapsed by `(relation, value)` to the maximum score. No threshold.
pub fn extract_candidates<T: Scalar>(
    doc: &Document,
    model: &LinearModel<T>,
    feature_config: &FeatureConfig,
) -> Result<Vec<Prediction<T>>> {
    check_config(model, feature_config)?;
    let mut best: BTreeMap<(String, String), T> = BTreeMap::new();
    for m in document_mentions(doc, feature_config)? {
        let Some((relation, score)) = model.best(&m.features) else {
            continue;
        };
        for value in m.normalized_items() {
            let slot = best.entry((relation.clone(), value)).or_insert(score);
            if score > *slot {
                *slot = score;
            }
        }
    }
    Ok(best
        .into_iter()
        .map(|((relation, value), score)| Prediction {
            doc_id: doc.doc_id.clone(),
            relation,
            value,
            score,
        })
        .collect())
}

/// Predictions whose calibrated score reaches the model's threshold.
pub fn extract_document<T: Scalar>(
    doc: &Document,
    model: &LinearModel<T>,
    feature_config: &FeatureConfig,
) -> Result<Vec<Prediction<T>>> {
    let threshold = T::lit(model.header.train_config.threshold);
    let mut out = extract_candidates(doc, model, feature_config)?;
    out.retain(|p| p.score >= threshold);
    Ok(out)
}

/// Candidates for every document, in document order.
pub fn extract_corpus<T: Scalar>(
    docs: &[Document],
    model: &LinearModel<T>,
    feature_config: &FeatureConfig,
) -> Result<Vec<Prediction<T>>> {
    let per_doc: Vec<Vec<Prediction<T>>> = docs
        .par_iter()
        .map(|d| extract_candidates(d, model, feature_config))
        .collect::<Result<_>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

pub fn write_predictions<T: Scalar>(path: impl AsRef<Path>, predictions: &[Prediction<T>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for p in predictions {
        writeln!(out, "{}\t{}\t{}\t{}", p.doc_id, p.relation, p.value, p.score).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction<f64>>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [doc_id, relation, value, score] = cols[..] else {
            return Err(Error::parse(&name, i + 1, "expected 4 tab-separated fields"));
        };
        let score = score.parse().map_err(|_| Error::parse(&name, i + 1, "bad score"))?;
        out.push(Prediction {
            doc_id: doc_id.into(),
            relation: relation.into(),
            value: value.into(),
            score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub doc_id: String,
    pub relation: String,
    pub value: String,
}

/// Reads `doc_id<TAB>relation<TAB>value` lines; values are normalized.
pub fn load_gold(path: impl AsRef<Path>, schema: &RelationSchema) -> Result<Vec<GoldAnnotation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gold(&text, &path.display().to_string(), schema)
}

pub fn parse_gold(text: &str, source_name: &str, schema: &RelationSchema) -> Result<Vec<GoldAnnotation>> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [doc_id, relation, value] = cols[..] else {
            return Err(Error::parse(source_name, i + 1, "expected 3 tab-separated fields"));
        };
        if schema.relation(relation).is_none() {
            return Err(Error::parse(source_name, i + 1, format!("unknown relation {relation:?}")));
        }
        out.insert(GoldAnnotation {
            doc_id: doc_id.into(),
            relation: relation.into(),
            value: normalize(value),
        });
    }
    Ok(out.into_iter().collect())
}

pub fn write_gold(path: impl AsRef<Path>, gold: &[GoldAnnotation]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for g in gold {
        writeln!(out, "{}\t{}\t{}", g.doc_id, g.relation, g.value).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prf<V> {
    pub precision: V,
    pub recall: V,
    pub f1: V,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl<V: MetricValue> Prf<V> {
    pub fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| {
            if b == 0 {
                V::zero()
            } else {
                V::from_count(a) / V::from_count(b)
            }
        };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = harmonic(&precision, &recall);
        Prf {
            precision,
            recall,
            f1,
            true_positives: tp,
            predicted,
            gold,
        }
    }
}

fn harmonic<V: MetricValue>(p: &V, r: &V) -> V {
    let sum = p.clone() + r.clone();
    if sum == V::zero() {
        V::zero()
    } else {
        V::from_count(2) * p.clone() * r.clone() / sum
    }
}

pub const ZERO_DIVISION_RULE: &str = "precision is 0 when nothing is predicted; recall is 0 when there is no gold";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<V> {
    pub zero_division: String,
    /// Counts pooled over every query (headline number).
    pub micro: Prf<V>,
    pub per_relation: BTreeMap<String, Prf<V>>,
    /// Unweighted mean of per-relation precision and recall; F1 is their
    /// harmonic mean.
    pub macro_avg: Prf<V>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingMetrics<V>>,
}

type Key<'a> = (&'a str, &'a str, &'a str);

/// Scores predictions against gold. `known_docs` lists the evaluated
/// documents; gold for any other document is an error.
pub fn evaluate<T, V: MetricValue>(
    predictions: &[Prediction<T>],
    gold: &[GoldAnnotation],
    known_docs: &BTreeSet<String>,
) -> Result<EvalReport<V>> {
    if gold.is_empty() {
        return Err(Error::EmptyGold);
    }
    if let Some(g) = gold.iter().find(|g| !known_docs.contains(&g.doc_id)) {
        return Err(Error::UnknownGoldDocument(g.doc_id.clone()));
    }
    let gold_keys: BTreeSet<Key> = gold
        .iter()
        .map(|g| (g.doc_id.as_str(), g.relation.as_str(), g.value.as_str()))
        .collect();
    let pred_keys: BTreeSet<Key> = predictions
        .iter()
        .map(|p| (p.doc_id.as_str(), p.relation.as_str(), p.value.as_str()))
        .collect();
    Ok(report_from_sets(&pred_keys, &gold_keys))
}

fn report_from_sets<V: MetricValue>(pred: &BTreeSet<Key>, gold: &BTreeSet<Key>) -> EvalReport<V> {
    let relations: BTreeSet<&str> = pred.iter().chain(gold).map(|k| k.1).collect();
    let per_relation: BTreeMap<String, Prf<V>> = relations
        .iter()
        .map(|&r| {
            let p = pred.iter().filter(|k| k.1 == r).count();
            let g = gold.iter().filter(|k| k.1 == r).count();
            let tp = pred.iter().filter(|k| k.1 == r && gold.contains(*k)).count();
            (r.to_owned(), Prf::from_counts(tp, p, g))
        })
        .collect();
    let tp = pred.intersection(gold).count();
    let micro = Prf::from_counts(tp, pred.len(), gold.len());
    let k = V::from_count(per_relation.len().max(1));
    let mean = |f: fn(&Prf<V>) -> V| per_relation.values().fold(V::zero(), |acc, x| acc + f(x)) / k.clone();
    let (mp, mr) = (mean(|x| x.precision.clone()), mean(|x| x.recall.clone()));
    let macro_avg = Prf {
        f1: harmonic(&mp, &mr),
        precision: mp,
        recall: mr,
        true_positives: micro.true_positives,
        predicted: micro.predicted,
        gold: micro.gold,
    };
    EvalReport {
        zero_division: ZERO_DIVISION_RULE.to_owned(),
        micro,
        per_relation,
        macro_avg,
        ranking: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint<T> {
    pub threshold: T,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, highest first: micro precision and recall
/// of the predictions scoring at least that threshold.
pub fn pr_curve<T: Scalar>(predictions: &[Prediction<T>], gold: &[GoldAnnotation]) -> Vec<PrPoint<T>> {
    let gold_keys: BTreeSet<Key> = gold
        .iter()
        .map(|g| (g.doc_id.as_str(), g.relation.as_str(), g.value.as_str()))
        .collect();
    // best score per distinct prediction key
    let mut best: BTreeMap<Key, T> = BTreeMap::new();
    for p in predictions {
        let slot = best
            .entry((p.doc_id.as_str(), p.relation.as_str(), p.value.as_str()))
            .or_insert(p.score);
        if p.score > *slot {
            *slot = p.score;
        }
    }
    let mut scored: Vec<(T, bool)> = best.iter().map(|(k, s)| (*s, gold_keys.contains(k))).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let mut points = Vec::new();
    let (mut tp, mut n) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].0;
        while i < scored.len() && scored[i].0 == threshold {
            tp += scored[i].1 as usize;
            n += 1;
            i += 1;
        }
        let prf = Prf::<f64>::from_counts(tp, n, gold_keys.len());
        points.push(PrPoint {
            threshold,
            precision: prf.precision,
            recall: prf.recall,
        });
    }
    points
}

pub fn write_pr_curve<T: Scalar>(path: impl AsRef<Path>, points: &[PrPoint<T>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(out, "threshold,precision,recall").map_err(|e| Error::io(path, e))?;
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.precision, p.recall).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics<V> {
    pub mrr: V,
    pub map: V,
    pub recall: V,
    pub queries: usize,
}

/// MRR, MAP and recall over queries given as `(ranked answers, gold answers)`.
/// A query with no correct answer (or no gold) contributes 0 to each.
pub fn ranking_metrics<V: MetricValue>(queries: &[(Vec<String>, BTreeSet<String>)]) -> RankingMetrics<V> {
    let (mut mrr, mut map, mut recall) = (V::zero(), V::zero(), V::zero());
    for (ranked, gold) in queries {
        if gold.is_empty() {
            continue;
        }
        let mut seen = BTreeSet::new();
        let mut hits = 0usize;
        let mut ap = V::zero();
        let mut first: Option<usize> = None;
        for (k, answer) in ranked.iter().enumerate() {
            if !seen.insert(answer) {
                continue;
            }
            if gold.contains(answer) {
                hits += 1;
                first.get_or_insert(k + 1);
                ap = ap + V::from_count(hits) / V::from_count(k + 1);
            }
        }
        if let Some(r) = first {
            mrr = mrr + V::one() / V::from_count(r);
        }
        map = map + ap / V::from_count(gold.len());
        recall = recall + V::from_count(hits) / V::from_count(gold.len());
    }
    let n = queries.len();
    let avg = |x: V| if n == 0 { V::zero() } else { x / V::from_count(n) };
    RankingMetrics {
        mrr: avg(mrr),
        map: avg(map),
        recall: avg(recall),
        queries: n,
    }
}

/// Gold queries with their answers ranked by descending score (value breaks ties).
pub fn query_rankings<T: Scalar>(
    predictions: &[Prediction<T>],
    gold: &[GoldAnnotation],
) -> Vec<(Vec<String>, BTreeSet<String>)> {
    let mut gold_by_query: BTreeMap<(&str, &str), BTreeSet<String>> = BTreeMap::new();
    for g in gold {
        gold_by_query
            .entry((g.doc_id.as_str(), g.relation.as_str()))
            .or_default()
            .insert(g.value.clone());
    }
    let mut answers: BTreeMap<(&str, &str), Vec<(T, &str)>> = BTreeMap::new();
    for p in predictions {
        answers
            .entry((p.doc_id.as_str(), p.relation.as_str()))
            .or_default()
            .push((p.score, p.value.as_str()));
    }
    gold_by_query
        .into_iter()
        .map(|(q, g)| {
            let mut list = answers.remove(&q).unwrap_or_default();
            list.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores").then_with(|| a.1.cmp(b.1)));
            (list.into_iter().map(|(_, v)| v.to_owned()).collect(), g)
        })
        .collect()
}

/// Full report: thresholded P/R/F1 plus ranking metrics over all candidates.
pub fn evaluate_candidates<T: Scalar, V: MetricValue>(
    candidates: &[Prediction<T>],
    threshold: T,
    gold: &[GoldAnnotation],
    known_docs: &BTreeSet<String>,
) -> Result<EvalReport<V>> {
    let kept: Vec<&Prediction<T>> = candidates.iter().filter(|p| p.score >= threshold).collect();
    let owned: Vec<Prediction<T>> = kept.into_iter().cloned().collect();
    let mut report = evaluate(&owned, gold, known_docs)?;
    report.ranking = Some(ranking_metrics(&query_rankings(candidates, gold)));
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Baseline {
    #[serde(rename = "DS_Struct")]
    DsStruct,
    #[serde(rename = "DS_Target")]
    DsTarget,
    #[serde(rename = "DS_Both")]
    DsBoth,
}

impl std::str::FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DS_Struct" => Ok(Baseline::DsStruct),
            "DS_Target" => Ok(Baseline::DsTarget),
            "DS_Both" => Ok(Baseline::DsBoth),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Baseline::DsStruct => "DS_Struct",
            Baseline::DsTarget => "DS_Target",
            Baseline::DsBoth => "DS_Both",
        })
    }
}

/// Positives each baseline trains on, per schema relation, deduplicated by
/// mention id.
pub fn baseline_positives<'a>(
    kind: Baseline,
    sets: &'a MentionSets,
    schema: &RelationSchema,
) -> Result<BTreeMap<String, Vec<&'a Mention>>> {
    let sources = match kind {
        Baseline::DsStruct => vec![&sets.rs],
        Baseline::DsTarget => vec![&sets.rt],
        Baseline::DsBoth => vec![&sets.rs, &sets.rt],
    };
    let mut out = BTreeMap::new();
    for relation in schema.relation_names() {
        let mut by_id: BTreeMap<&str, &Mention> = BTreeMap::new();
        for lm in sources.iter().flat_map(|s| s.iter()).filter(|lm| lm.label == relation) {
            by_id.entry(lm.mention.mention_id.as_str()).or_insert(&lm.mention);
        }
        if by_id.is_empty() {
            return Err(Error::Training(format!(
                "{kind}: relation {relation:?} has no distantly labeled mentions"
            )));
        }
        out.insert(relation.to_owned(), by_id.into_values().collect());
    }
    Ok(out)
}

/// Trains directly on distant labels with no propagation step.
pub fn run_baseline<T: Scalar>(
    kind: Baseline,
    sets: &MentionSets,
    pool: &[Mention],
    schema: &RelationSchema,
    config: &TrainConfig,
    feature_config: &FeatureConfig,
) -> Result<LinearModel<T>> {
    let positives = baseline_positives(kind, sets, schema)?;
    fit_model(&positives, pool, &sets.relation_labeled_ids(), config, feature_config)
}
