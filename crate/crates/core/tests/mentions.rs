mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{labeling_fixture, node_order, ppr_solve, tfidf_edges, FIXTURE_OFF_SECTION, FIXTURE_RS};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relprop::corpus::CorpusTag;
use relprop::features::{FeatureVector, MentionKind};
use relprop::mentions::{build_relation_mentions, expand_concept_mentions};
use relprop::synth::{generate, SynthConfig};
use relprop::{ConceptSeed, LabeledMention, Mention, PropagationConfig, SourceSet};

fn pairs(set: &[LabeledMention]) -> BTreeSet<(String, String)> {
    set.iter().map(|lm| (lm.mention.mention_id.clone(), lm.label.clone())).collect()
}

fn owned(list: &[(&str, &str)]) -> BTreeSet<(String, String)> {
    list.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
}

#[test]
fn fixture_labels_match_hand_enumeration() {
    let fx = labeling_fixture();
    let enforced = build_relation_mentions(&fx.mentions, &fx.triples, &fx.schema, true);
    assert_eq!(pairs(&enforced), owned(&FIXTURE_RS));
    assert!(enforced.iter().all(|lm| lm.source_set == SourceSet::Rs));

    let loose = build_relation_mentions(&fx.mentions, &fx.triples, &fx.schema, false);
    let expected: BTreeSet<_> = owned(&FIXTURE_RS).union(&owned(&FIXTURE_OFF_SECTION)).cloned().collect();
    assert_eq!(pairs(&loose), expected);
}

#[test]
fn overdose_mention_is_not_a_side_effect() {
    let fx = labeling_fixture();
    let overdose: Vec<&Mention> = fx.mentions.iter().filter(|m| m.section_title == "overdose").collect();
    assert!(overdose.iter().any(|m| m.item_surfaces == ["nausea"]));
    let enforced = build_relation_mentions(&fx.mentions, &fx.triples, &fx.schema, true);
    assert!(enforced.iter().all(|lm| lm.mention.section_title != "overdose"));
}

#[test]
fn relation_sets_respect_sections_on_synthetic_corpus() {
    let bench = generate(&SynthConfig {
        target_docs: 40,
        structured_docs: 10,
        eval_docs: 5,
        kb_triples: 60,
        ..Default::default()
    })
    .unwrap();
    let prepared = relprop::pipeline::Prepared::new(
        &bench.structured,
        &bench.target,
        &bench.schema,
        &bench.triples,
        &bench.concept_seeds,
        &PropagationConfig::default(),
        &Default::default(),
    )
    .unwrap();
    let sets = &prepared.sets;
    assert!(!sets.rs.is_empty() && !sets.cs.is_empty() && !sets.ct.is_empty());
    for lm in &sets.rs {
        let def = bench.schema.relation(&lm.label).unwrap();
        assert!(def.section_titles.contains(&lm.mention.section_title), "{}", lm.mention.mention_id);
    }
    for lm in &sets.cs {
        assert!(bench.schema.section_fits_concept(&lm.mention.section_title, &lm.label));
    }
    let structured: BTreeMap<&str, &Mention> =
        prepared.structured.iter().map(|m| (m.mention_id.as_str(), m)).collect();
    let target: BTreeMap<&str, &Mention> = prepared.target.iter().map(|m| (m.mention_id.as_str(), m)).collect();
    for lm in sets.iter() {
        let home = match lm.source_set {
            SourceSet::Rs | SourceSet::Cs => &structured,
            SourceSet::Rt | SourceSet::Ct => &target,
        };
        assert_eq!(home.get(lm.mention.mention_id.as_str()), Some(&&lm.mention));
        assert_eq!(lm.source_set.is_relation_set(), bench.schema.relation(&lm.label).is_some());
    }
    // section enforcement only removes labels
    let loose = build_relation_mentions(&prepared.structured, &bench.triples, &bench.schema, false);
    assert!(pairs(&sets.rs).is_subset(&pairs(&loose)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn triple_order_does_not_matter(seed in any::<u64>(), enforce in any::<bool>()) {
        let fx = labeling_fixture();
        let mut shuffled = fx.triples.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut doubled = shuffled.clone();
        doubled.extend(fx.triples.iter().cloned());
        let base = build_relation_mentions(&fx.mentions, &fx.triples, &fx.schema, enforce);
        prop_assert_eq!(&build_relation_mentions(&fx.mentions, &shuffled, &fx.schema, enforce), &base);
        prop_assert_eq!(&build_relation_mentions(&fx.mentions, &doubled, &fx.schema, enforce), &base);
    }
}

fn concept_mention(id: &str, items: &[&str], feats: &[&str]) -> Mention {
    Mention {
        mention_id: id.into(),
        doc_id: "t1".into(),
        title_entity: "meloxicam".into(),
        section_title: "description".into(),
        corpus: CorpusTag::Target,
        kind: if items.len() > 1 {
            MentionKind::List
        } else {
            MentionKind::Singleton
        },
        item_surfaces: items.iter().map(|s| s.to_string()).collect(),
        features: feats.iter().map(|s| s.to_string()).collect::<FeatureVector>(),
    }
}

#[test]
fn concept_expansion_matches_brute_force() {
    let mentions = vec![
        concept_mention("t1:0:0:L2-5", &["nausea", "vomiting"], &["tok=nausea", "tok=vomiting", "win-L1=include", "bow=cause"]),
        concept_mention("t1:0:1:3-4", &["vomiting"], &["tok=vomiting", "win-L1=include", "bow=severe"]),
        concept_mention("t1:1:0:2-3", &["arthritis"], &["tok=arthritis", "win-L1=treats", "bow=relieve"]),
        concept_mention("t1:1:1:2-3", &["gout"], &["tok=gout", "win-L1=treats", "bow=pain"]),
        concept_mention("t1:2:0:0-1", &["tablet"], &["tok=tablet", "bow=store"]),
    ];
    let schema = relprop::kb::parse_schema(
        &std::fs::read_to_string(common::fixture_dir("labeling").join("schema.json")).unwrap(),
    )
    .unwrap();
    let seeds = vec![
        ConceptSeed {
            concept: "Symptom".into(),
            instance: "nausea".into(),
        },
        ConceptSeed {
            concept: "Disease".into(),
            instance: "arthritis".into(),
        },
    ];
    let config = PropagationConfig::default();
    let got = expand_concept_mentions(&mentions, &seeds, &schema, &config).unwrap();

    let edges = tfidf_edges(&mentions);
    let nodes = node_order(&edges);
    let classes = [("Disease", "t1:1:0:2-3"), ("Symptom", "t1:0:0:L2-5")];
    let scores: Vec<BTreeMap<String, f64>> = classes
        .iter()
        .map(|(_, s)| ppr_solve(&nodes, &edges, &BTreeSet::from([s.to_string()]), config.restart_prob))
        .collect();
    let mut expected = BTreeSet::new();
    for m in &mentions {
        let id = &m.mention_id;
        let (d, s) = (scores[0][id], scores[1][id]);
        if d > 0.0 || s > 0.0 {
            expected.insert((id.clone(), if s > d { "Symptom" } else { "Disease" }.to_string()));
        }
    }
    assert_eq!(pairs(&got), expected);
    assert!(expected.contains(&("t1:0:1:3-4".to_string(), "Symptom".to_string())));
    assert!(expected.iter().all(|(id, _)| id != "t1:2:0:0-1"));
    assert!(got.iter().all(|lm| lm.source_set == SourceSet::Ct));
}
