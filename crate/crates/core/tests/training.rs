mod common;

use std::collections::BTreeMap;

use common::{dense_rows, hinge_oracle, mention, primal_objective, separable_toy, DenseExample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relprop::corpus::CorpusTag;
use relprop::pipeline::{train_from_ranking, Prepared};
use relprop::propagation::RankedLabeling;
use relprop::synth::{generate, SynthConfig};
use relprop::training::{distill, fit_binary, hinge_objective, Example};
use relprop::{FeatureConfig, LabeledMention, MentionSets, PropagationConfig, SourceSet, Strategy, TrainConfig, VariantSpec};

fn sparse(data: &[DenseExample]) -> Vec<Example<f64>> {
    data.iter()
        .map(|e| Example {
            x: e.x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect(),
            y: e.y,
        })
        .collect()
}

#[test]
fn learner_reaches_oracle_objective_on_toy_set() {
    let (vocab, rows) = separable_toy();
    let dense = dense_rows(&vocab, &rows);
    let lambda = 1e-3;
    let fit = fit_binary(&sparse(&dense), vocab.len(), lambda, 50, 0);
    let learner = primal_objective(&fit.weights, fit.bias, &dense, lambda);
    assert!((learner - hinge_objective(&fit.weights, fit.bias, &sparse(&dense), lambda)).abs() < 1e-12);
    let (_, _, oracle, dual) = hinge_oracle(&dense, lambda, 20_000);
    assert!(oracle - dual <= 1e-6, "oracle not converged: primal {oracle} dual {dual}");
    assert!((learner - oracle).abs() <= 0.01 * oracle, "learner {learner} vs oracle {oracle}");
}

#[test]
fn learner_reaches_oracle_objective_on_noisy_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..5 {
        let dim = 6;
        let data: Vec<DenseExample> = (0..20)
            .map(|_| {
                let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let clean = x[0] + 0.5 * x[1] > 0.0;
                let y = if clean ^ rng.gen_bool(0.15) { 1.0 } else { -1.0 };
                DenseExample { x, y }
            })
            .collect();
        let lambda = 0.01;
        let fit = fit_binary(&sparse(&data), dim, lambda, 200, round);
        let learner = primal_objective(&fit.weights, fit.bias, &data, lambda);
        let (_, _, oracle, dual) = hinge_oracle(&data, lambda, 50_000);
        assert!(oracle - dual <= 1e-6 * oracle.max(1.0));
        assert!((learner - oracle).abs() <= 0.01 * oracle, "round {round}: {learner} vs {oracle}");
    }
}

fn ranked_sets(corpora: &[CorpusTag]) -> (RankedLabeling<f64>, MentionSets) {
    let ids: Vec<String> = (0..corpora.len()).map(|i| format!("m{i:03}")).collect();
    let ranking = RankedLabeling {
        rankings: BTreeMap::from([(
            "sideEffect".to_string(),
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), 1.0 / (i + 1) as f64))
                .collect(),
        )]),
        assignments: ids.iter().map(|id| (id.clone(), "sideEffect".to_string())).collect(),
    };
    let mut sets = MentionSets::default();
    for (id, corpus) in ids.iter().zip(corpora) {
        let lm = LabeledMention {
            mention: mention(id, *corpus, &[]),
            label: "sideEffect".into(),
            source_set: SourceSet::relation(*corpus),
        };
        match corpus {
            CorpusTag::Structured => sets.rs.push(lm),
            _ => sets.rt.push(lm),
        }
    }
    (ranking, sets)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn distilled_positives_are_a_filtered_prefix(
        target in prop::collection::vec(any::<bool>(), 1..40),
        n in 1usize..50,
        both in any::<bool>(),
    ) {
        let corpora: Vec<CorpusTag> = target
            .iter()
            .map(|t| if *t { CorpusTag::Target } else { CorpusTag::Structured })
            .collect();
        let (ranking, sets) = ranked_sets(&corpora);
        let strategy = if both { Strategy::Both } else { Strategy::Target };
        let config = TrainConfig { n, strategy, ..Default::default() };
        let out = distill(&ranking, &sets, &config).unwrap();
        let eligible: Vec<String> = ranking.rankings["sideEffect"]
            .iter()
            .zip(&corpora)
            .filter(|(_, c)| both || **c == CorpusTag::Target)
            .map(|((id, _), _)| id.clone())
            .collect();
        let got = &out.positives["sideEffect"];
        prop_assert_eq!(got.as_slice(), &eligible[..n.min(eligible.len())]);
        prop_assert_eq!(out.shortfalls.contains_key("sideEffect"), eligible.len() < n);
    }
}

#[test]
fn model_serialization_is_reproducible() {
    let bench = generate(&SynthConfig {
        target_docs: 60,
        structured_docs: 12,
        eval_docs: 5,
        kb_triples: 60,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let features = FeatureConfig::default();
    let run = || {
        let prepared = Prepared::new(
            &bench.structured,
            &bench.target,
            &bench.schema,
            &bench.triples,
            &bench.concept_seeds,
            &PropagationConfig::default(),
            &features,
        )
        .unwrap();
        let ranking = prepared
            .rank(&"RsCsRt".parse::<VariantSpec>().unwrap(), &PropagationConfig::default())
            .unwrap();
        let train = TrainConfig {
            n: 20,
            rng_seed: 9,
            ..Default::default()
        };
        let (_, model) = train_from_ranking(&prepared, &ranking, &prepared.pool(), &train, &features).unwrap();
        model.to_json().unwrap()
    };
    let first = run();
    assert_eq!(first, run());
    let model = relprop::Model::from_json(&first).unwrap();
    for c in model.classifiers.values() {
        assert!(c.bias.is_finite());
        assert!(c.weights.values().all(|w| w.is_finite()));
        assert!(c.weights.keys().all(|f| model.vocabulary.binary_search(f).is_ok()));
    }
}
