//! Top-N distillation, negative sampling and one-vs-rest linear classifiers.
//!
//! Each binary classifier minimizes the L2-regularized hinge loss
//!
//! ```text
//! J(w, b) = λ/2 · (‖w‖² + b²) + 1/n · Σᵢ max(0, 1 − yᵢ(w·xᵢ + b))
//! ```
//!
//! by dual coordinate descent: epoch after epoch, examples are visited in a
//! shuffled order fixed by the RNG seed and each dual variable is optimized
//! in closed form. Feature vectors are restricted to the training vocabulary
//! and L2-normalized. Margins can be mapped to probabilities with a Platt
//! sigmoid fit on the training margins.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_feature_filter, FeatureConfig, FeatureFilter, FeatureVector, Mention};
use crate::mentions::MentionSets;
use crate::propagation::RankedLabeling;
use crate::scalar::Scalar;

/// Label for mentions no classifier accepts.
pub const OTHER: &str = "other";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Top N of the ranking regardless of corpus.
    Both,
    /// Top N among target-corpus mentions only.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    Platt,
    RawMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Positives kept per relation.
    pub n: usize,
    pub strategy: Strategy,
    /// General negatives to sample; `None` means `n`.
    pub negatives: Option<usize>,
    pub rng_seed: u64,
    pub lambda: f64,
    pub epochs: usize,
    pub calibration: Calibration,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n: 100,
            strategy: Strategy::Both,
            negatives: None,
            rng_seed: 0,
            lambda: 1e-3,
            epochs: 50,
            calibration: Calibration::Platt,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn negative_count(&self) -> usize {
        self.negatives.unwrap_or(self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("training n must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Distilled {
    /// Relation → positive mention ids, in ranking order.
    pub positives: BTreeMap<String, Vec<String>>,
    /// Relations that had fewer than N eligible entries, with the count found.
    pub shortfalls: BTreeMap<String, usize>,
}

impl Distilled {
    pub fn all_ids(&self) -> BTreeSet<&str> {
        self.positives.values().flatten().map(String::as_str).collect()
    }
}

/// Top-N positives per relation under the chosen strategy.
pub fn distill<T: Scalar>(ranking: &RankedLabeling<T>, sets: &MentionSets, config: &TrainConfig) -> Result<Distilled> {
    let index = sets.mention_index();
    let mut out = Distilled::default();
    for (relation, list) in &ranking.rankings {
        let mut chosen = Vec::new();
        for (id, _) in list {
            if chosen.len() == config.n {
                break;
            }
            let keep = match config.strategy {
                Strategy::Both => true,
                Strategy::Target => {
                    let m = index
                        .get(id.as_str())
                        .ok_or_else(|| Error::Training(format!("ranked mention {id:?} is not in any mention set")))?;
                    m.corpus == crate::corpus::CorpusTag::Target
                }
            };
            if keep {
                chosen.push(id.clone());
            }
        }
        if chosen.len() < config.n {
            log::warn!(
                "relation {relation}: only {} of {} requested positives available",
                chosen.len(),
                config.n
            );
            out.shortfalls.insert(relation.clone(), chosen.len());
        }
        out.positives.insert(relation.clone(), chosen);
    }
    Ok(out)
}

/// Uniform sample without replacement from mentions whose id is not in
/// `labeled`. Reproducible from `rng_seed` and independent of pool order.
pub fn sample_negatives<'a>(
    pool: &'a [Mention],
    labeled: &BTreeSet<&str>,
    count: usize,
    rng_seed: u64,
) -> Result<Vec<&'a Mention>> {
    let mut eligible: Vec<&Mention> = pool
        .iter()
        .filter(|m| !labeled.contains(m.mention_id.as_str()))
        .collect();
    eligible.sort_by(|a, b| a.mention_id.cmp(&b.mention_id));
    eligible.dedup_by(|a, b| a.mention_id == b.mention_id);
    if eligible.len() < count {
        return Err(Error::InsufficientNegatives {
            needed: count,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked: Vec<&Mention> = rand::seq::index::sample(&mut rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_by(|a, b| a.mention_id.cmp(&b.mention_id));
    Ok(picked)
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub positives: BTreeMap<String, Vec<Mention>>,
    /// General negatives shared by every relation.
    pub negatives: Vec<Mention>,
    pub filter: FeatureFilter,
}

impl TrainingSet {
    /// Fits the feature filter on every distinct training mention.
    pub fn new(positives: BTreeMap<String, Vec<Mention>>, negatives: Vec<Mention>) -> Self {
        let mut unique: BTreeMap<&str, &FeatureVector> = BTreeMap::new();
        for m in positives.values().flatten().chain(&negatives) {
            unique.entry(m.mention_id.as_str()).or_insert(&m.features);
        }
        let filter = build_feature_filter(unique.into_values());
        TrainingSet {
            positives,
            negatives,
            filter,
        }
    }

    /// Positives and negatives for one relation: every other relation's
    /// positives plus the general negatives, minus this relation's positives.
    pub fn examples_for(&self, relation: &str) -> (Vec<&Mention>, Vec<&Mention>) {
        let pos: Vec<&Mention> = self.positives.get(relation).map(|v| v.iter().collect()).unwrap_or_default();
        let pos_ids: BTreeSet<&str> = pos.iter().map(|m| m.mention_id.as_str()).collect();
        let mut seen = BTreeSet::new();
        let neg = self
            .positives
            .iter()
            .filter(|(r, _)| r.as_str() != relation)
            .flat_map(|(_, v)| v)
            .chain(&self.negatives)
            .filter(|m| !pos_ids.contains(m.mention_id.as_str()) && seen.insert(m.mention_id.as_str()))
            .collect();
        (pos, neg)
    }
}

/// Sparse example: `(feature index, value)` pairs plus a ±1 label.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub x: Vec<(usize, T)>,
    pub y: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlattParams<T> {
    #[serde(rename = "A")]
    pub a: T,
    #[serde(rename = "B")]
    pub b: T,
}

impl<T: Scalar> PlattParams<T> {
    pub fn probability(&self, margin: T) -> T {
        let z = self.a * margin + self.b;
        // numerically stable logistic of -z
        if z >= T::zero() {
            let e = (-z).exp();
            e / (T::one() + e)
        } else {
            T::one() / (T::one() + z.exp())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassifier<T> {
    pub bias: T,
    pub weights: BTreeMap<String, T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub platt: Option<PlattParams<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub feature_config: FeatureConfig,
    pub train_config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<T> {
    pub header: ModelHeader,
    /// Features that survived the training-set filter.
    pub vocabulary: Vec<String>,
    pub classifiers: BTreeMap<String, BinaryClassifier<T>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Sparse, normalized input for a fitted model.
fn vectorize<T: Scalar>(features: &FeatureVector, index: &HashMap<String, usize>) -> Vec<(usize, T)> {
    let mut x: Vec<(usize, T)> = features
        .iter()
        .filter_map(|(f, c)| index.get(f).map(|&i| (i, T::of_count(c as usize))))
        .collect();
    x.sort_by_key(|(i, _)| *i);
    let norm = x.iter().map(|(_, v)| *v * *v).sum::<T>().sqrt();
    if norm > T::zero() {
        x.iter_mut().for_each(|(_, v)| *v = *v / norm);
    }
    x
}

fn dot<T: Scalar>(w: &[T], x: &[(usize, T)]) -> T {
    x.iter().map(|(i, v)| w[*i] * *v).sum()
}

/// Primal objective `λ/2 (‖w‖² + b²) + mean hinge`.
pub fn hinge_objective<T: Scalar>(w: &[T], b: T, examples: &[Example<T>], lambda: T) -> T {
    let reg = (w.iter().map(|v| *v * *v).sum::<T>() + b * b) * lambda / T::lit(2.0);
    let loss: T = examples
        .iter()
        .map(|e| (T::one() - e.y * (dot(w, &e.x) + b)).max(T::zero()))
        .sum();
    reg + loss / T::of_count(examples.len().max(1))
}

#[derive(Debug, Clone)]
pub struct BinaryFit<T> {
    pub weights: Vec<T>,
    pub bias: T,
    /// Dual objective after each epoch (non-decreasing).
    pub dual_objectives: Vec<T>,
}

/// Dual coordinate descent for the L2-regularized hinge loss.
pub fn fit_binary<T: Scalar>(examples: &[Example<T>], dim: usize, lambda: T, epochs: usize, rng_seed: u64) -> BinaryFit<T> {
    let n = examples.len();
    let upper = T::one() / (lambda * T::of_count(n.max(1)));
    let q_diag: Vec<T> = examples
        .iter()
        .map(|e| e.x.iter().map(|(_, v)| *v * *v).sum::<T>() + T::one())
        .collect();
    let mut alpha = vec![T::zero(); n];
    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut dual_objectives = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let e = &examples[i];
            let g = e.y * (dot(&w, &e.x) + b) - T::one();
            let pg = if alpha[i] <= T::zero() {
                g.min(T::zero())
            } else if alpha[i] >= upper {
                g.max(T::zero())
            } else {
                g
            };
            if pg == T::zero() {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / q_diag[i]).max(T::zero()).min(upper);
            let d = (alpha[i] - old) * e.y;
            for (j, v) in &e.x {
                w[*j] = w[*j] + d * *v;
            }
            b = b + d;
        }
        let norm2 = w.iter().map(|v| *v * *v).sum::<T>() + b * b;
        let dual = lambda * (alpha.iter().copied().sum::<T>() - norm2 / T::lit(2.0));
        dual_objectives.push(dual);
    }
    BinaryFit {
        weights: w,
        bias: b,
        dual_objectives,
    }
}

/// Platt sigmoid fit (Newton's method with backtracking on the regularized
/// targets of Lin, Lin and Weng).
pub fn fit_platt<T: Scalar>(margins: &[T], labels: &[bool]) -> PlattParams<T> {
    let prior1 = labels.iter().filter(|&&l| l).count();
    let prior0 = labels.len() - prior1;
    let hi = T::of_count(prior1 + 1) / T::of_count(prior1 + 2);
    let lo = T::one() / T::of_count(prior0 + 2);
    let targets: Vec<T> = labels.iter().map(|&l| if l { hi } else { lo }).collect();

    let (max_iter, min_step, sigma, eps) = (100, T::lit(1e-10), T::lit(1e-12), T::lit(1e-5));
    let mut a = T::zero();
    let mut b = (T::of_count(prior0 + 1) / T::of_count(prior1 + 1)).ln();

    let value = |a: T, b: T| -> T {
        margins
            .iter()
            .zip(&targets)
            .map(|(&f, &t)| {
                let z = f * a + b;
                if z >= T::zero() {
                    t * z + (T::one() + (-z).exp()).ln()
                } else {
                    (t - T::one()) * z + (T::one() + z.exp()).ln()
                }
            })
            .sum()
    };
    let mut fval = value(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, T::zero(), T::zero(), T::zero());
        for (&f, &t) in margins.iter().zip(&targets) {
            let z = f * a + b;
            let (p, q) = if z >= T::zero() {
                let e = (-z).exp();
                (e / (T::one() + e), T::one() / (T::one() + e))
            } else {
                let e = z.exp();
                (T::one() / (T::one() + e), e / (T::one() + e))
            };
            let d2 = p * q;
            h11 = h11 + f * f * d2;
            h22 = h22 + d2;
            h21 = h21 + f * d2;
            let d1 = t - p;
            g1 = g1 + f * d1;
            g2 = g2 + d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = T::one();
        let mut accepted = false;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = value(na, nb);
            if nf < fval + T::lit(1e-4) * step * gd {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step = step / T::lit(2.0);
        }
        if !accepted {
            break;
        }
    }
    PlattParams { a, b }
}

impl<T: Scalar> LinearModel<T> {
    fn build_index(&mut self) {
        self.index = self.vocabulary.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.classifiers.keys().map(String::as_str)
    }

    /// Decision value `w·x + b` per relation.
    pub fn margins(&self, features: &FeatureVector) -> BTreeMap<String, T> {
        let x = vectorize::<T>(features, &self.index);
        self.classifiers
            .iter()
            .map(|(r, c)| {
                let m = x
                    .iter()
                    .map(|(i, v)| c.weights.get(&self.vocabulary[*i]).copied().unwrap_or_else(T::zero) * *v)
                    .sum::<T>()
                    + c.bias;
                (r.clone(), m)
            })
            .collect()
    }

    /// Calibrated score per relation (raw margin when calibration is off).
    pub fn scores(&self, features: &FeatureVector) -> BTreeMap<String, T> {
        let mut m = self.margins(features);
        for (r, v) in m.iter_mut() {
            if let Some(p) = &self.classifiers[r].platt {
                *v = p.probability(*v);
            }
        }
        m
    }

    /// Highest-scoring relation with its score, ties to the first relation.
    pub fn best(&self, features: &FeatureVector) -> Option<(String, T)> {
        let mut best: Option<(String, T)> = None;
        for (r, s) in self.scores(features) {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((r, s));
            }
        }
        best
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: Self = serde_json::from_str(text)?;
        model.build_index();
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Relation label for a feature vector, or [`OTHER`] when no calibrated
/// score reaches `threshold`.
pub fn classify<T: Scalar>(model: &LinearModel<T>, features: &FeatureVector, threshold: T) -> String {
    decide(&model.scores(features), threshold)
}

/// Argmax over scores at or above `threshold`; ties go to the
/// lexicographically first relation.
pub fn decide<T: Scalar>(scores: &BTreeMap<String, T>, threshold: T) -> String {
    let mut best: Option<(&str, T)> = None;
    for (r, &s) in scores {
        if s >= threshold && best.is_none_or(|(_, b)| s > b) {
            best = Some((r, s));
        }
    }
    best.map(|(r, _)| r.to_owned()).unwrap_or_else(|| OTHER.to_owned())
}

/// Per-relation binary classifiers over a training set.
pub fn train<T: Scalar>(set: &TrainingSet, config: &TrainConfig, feature_config: &FeatureConfig) -> Result<LinearModel<T>> {
    config.validate()?;
    let vocabulary: Vec<String> = set.filter.kept.iter().cloned().collect();
    let index: HashMap<String, usize> = vocabulary.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
    let lambda = T::lit(config.lambda);
    let relations: Vec<&String> = set.positives.keys().collect();

    let fitted: Vec<(String, BinaryClassifier<T>)> = relations
        .par_iter()
        .enumerate()
        .map(|(ri, relation)| {
            let (pos, neg) = set.examples_for(relation);
            if pos.is_empty() {
                return Err(Error::Training(format!("relation {relation:?} has no positive examples")));
            }
            if neg.is_empty() {
                return Err(Error::Training(format!("relation {relation:?} has no negative examples")));
            }
            let examples: Vec<Example<T>> = pos
                .iter()
                .map(|m| (m, T::one()))
                .chain(neg.iter().map(|m| (m, -T::one())))
                .map(|(m, y)| Example {
                    x: vectorize(&m.features, &index),
                    y,
                })
                .collect();
            let fit = fit_binary(
                &examples,
                vocabulary.len(),
                lambda,
                config.epochs,
                config.rng_seed.wrapping_add(ri as u64),
            );
            let platt = match config.calibration {
                Calibration::Platt => {
                    let margins: Vec<T> = examples.iter().map(|e| dot(&fit.weights, &e.x) + fit.bias).collect();
                    let labels: Vec<bool> = examples.iter().map(|e| e.y > T::zero()).collect();
                    Some(fit_platt(&margins, &labels))
                }
                Calibration::RawMargin => None,
            };
            let weights = fit
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != T::zero())
                .map(|(i, w)| (vocabulary[i].clone(), *w))
                .collect();
            Ok((
                (*relation).clone(),
                BinaryClassifier {
                    bias: fit.bias,
                    weights,
                    platt,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut model = LinearModel {
        header: ModelHeader {
            feature_config: *feature_config,
            train_config: *config,
        },
        vocabulary,
        classifiers: fitted.into_iter().collect(),
        index: HashMap::new(),
    };
    model.build_index();
    Ok(model)
}

/// Samples general negatives and trains on the given positives.
///
/// `labeled` holds every distantly labeled mention id; they and the
/// positives are excluded from the negative pool.
pub fn fit_model<T: Scalar>(
    positives: &BTreeMap<String, Vec<&Mention>>,
    pool: &[Mention],
    labeled: &BTreeSet<&str>,
    config: &TrainConfig,
    feature_config: &FeatureConfig,
) -> Result<LinearModel<T>> {
    let mut excluded = labeled.clone();
    excluded.extend(positives.values().flatten().map(|m| m.mention_id.as_str()));
    let negatives = sample_negatives(pool, &excluded, config.negative_count(), config.rng_seed)?;
    let set = TrainingSet::new(
        positives
            .iter()
            .map(|(r, ms)| (r.clone(), ms.iter().map(|m| (*m).clone()).collect()))
            .collect(),
        negatives.into_iter().cloned().collect(),
    );
    train(&set, config, feature_config)
}
