//! In-memory end-to-end runs: mention pools → mention sets → propagation →
//! distillation → training → extraction → evaluation.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Rational64;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::eval::{evaluate_candidates, extract_corpus, run_baseline, Baseline, EvalReport, GoldAnnotation, Prediction};
use crate::features::{corpus_mentions, FeatureConfig, Mention};
use crate::kb::{ConceptSeed, RelationSchema, Triple};
use crate::mentions::{build_mention_sets, MentionSets};
use crate::propagation::{build_graph, multirankwalk, PropagationConfig, RankedLabeling, VariantSpec};
use crate::training::{distill, fit_model, Distilled, LinearModel, TrainConfig};

/// Everything computed before training: mention pools, sets and rankings.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub structured: Vec<Mention>,
    pub target: Vec<Mention>,
    pub sets: MentionSets,
}

impl Prepared {
    pub fn new(
        structured_docs: &[Document],
        target_docs: &[Document],
        schema: &RelationSchema,
        triples: &[Triple],
        seeds: &[ConceptSeed],
        propagation: &PropagationConfig,
        features: &FeatureConfig,
    ) -> Result<Self> {
        let structured = corpus_mentions(structured_docs, features)?;
        let target = corpus_mentions(target_docs, features)?;
        let sets = build_mention_sets(&structured, &target, triples, seeds, schema, propagation)?;
        Ok(Prepared {
            structured,
            target,
            sets,
        })
    }

    /// Both corpora's mentions, the pool for negative sampling.
    pub fn pool(&self) -> Vec<Mention> {
        self.structured.iter().chain(&self.target).cloned().collect()
    }

    pub fn rank(&self, variant: &VariantSpec, config: &PropagationConfig) -> Result<RankedLabeling<f64>> {
        let graph = build_graph::<f64>(&self.sets, variant)?;
        multirankwalk(&graph, &self.sets.seeds_by_relation(), config)
    }
}

/// Looks up distilled mention ids.
pub fn distilled_mentions<'a>(distilled: &Distilled, sets: &'a MentionSets) -> Result<BTreeMap<String, Vec<&'a Mention>>> {
    let index = sets.mention_index();
    distilled
        .positives
        .iter()
        .map(|(r, ids)| {
            let ms = ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Training(format!("distilled mention {id:?} is not in any mention set")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((r.clone(), ms))
        })
        .collect()
}

/// Distills from a ranking and trains.
pub fn train_from_ranking(
    prepared: &Prepared,
    ranking: &RankedLabeling<f64>,
    pool: &[Mention],
    train: &TrainConfig,
    features: &FeatureConfig,
) -> Result<(Distilled, LinearModel<f64>)> {
    let distilled = distill(ranking, &prepared.sets, train)?;
    let positives = distilled_mentions(&distilled, &prepared.sets)?;
    let model = fit_model(&positives, pool, &prepared.sets.relation_labeled_ids(), train, features)?;
    Ok((distilled, model))
}

/// Candidates on the evaluation documents and the exact report.
pub fn score_model(
    model: &LinearModel<f64>,
    eval_docs: &[Document],
    gold: &[GoldAnnotation],
    features: &FeatureConfig,
) -> Result<(Vec<Prediction<f64>>, EvalReport<Rational64>)> {
    let candidates = extract_corpus(eval_docs, model, features)?;
    let known: BTreeSet<String> = eval_docs.iter().map(|d| d.doc_id.clone()).collect();
    let report = evaluate_candidates(&candidates, model.header.train_config.threshold, gold, &known)?;
    Ok((candidates, report))
}

pub fn baseline_model(
    kind: Baseline,
    prepared: &Prepared,
    pool: &[Mention],
    schema: &RelationSchema,
    train: &TrainConfig,
    features: &FeatureConfig,
) -> Result<LinearModel<f64>> {
    run_baseline(kind, &prepared.sets, pool, schema, train, features)
}
