//! Distantly labeled relation mentions (`Rs`, `Rt`) and concept mentions
//! (`Cs`, `Ct`). Section constraints apply to the structured corpus only.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusTag;
use crate::error::{Error, Result};
use crate::features::Mention;
use crate::kb::{ConceptSeed, RelationSchema, Triple};
use crate::propagation::{multirankwalk, BipartiteGraph, PropagationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceSet {
    Rs,
    Rt,
    Cs,
    Ct,
}

impl SourceSet {
    pub fn relation(corpus: CorpusTag) -> Self {
        match corpus {
            CorpusTag::Structured => SourceSet::Rs,
            CorpusTag::Target => SourceSet::Rt,
        }
    }

    pub fn concept(corpus: CorpusTag) -> Self {
        match corpus {
            CorpusTag::Structured => SourceSet::Cs,
            CorpusTag::Target => SourceSet::Ct,
        }
    }

    pub fn is_relation_set(self) -> bool {
        matches!(self, SourceSet::Rs | SourceSet::Rt)
    }
}

impl fmt::Display for SourceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceSet::Rs => "Rs",
            SourceSet::Rt => "Rt",
            SourceSet::Cs => "Cs",
            SourceSet::Ct => "Ct",
        })
    }
}

impl FromStr for SourceSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Rs" => Ok(SourceSet::Rs),
            "Rt" => Ok(SourceSet::Rt),
            "Cs" => Ok(SourceSet::Cs),
            "Ct" => Ok(SourceSet::Ct),
            other => Err(Error::Config(format!("unknown mention set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledMention {
    #[serde(flatten)]
    pub mention: Mention,
    /// Relation name for `Rs`/`Rt`, concept name for `Cs`/`Ct`.
    pub label: String,
    pub source_set: SourceSet,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionSets {
    pub rs: Vec<LabeledMention>,
    pub rt: Vec<LabeledMention>,
    pub cs: Vec<LabeledMention>,
    pub ct: Vec<LabeledMention>,
}

impl MentionSets {
    pub fn get(&self, set: SourceSet) -> &[LabeledMention] {
        match set {
            SourceSet::Rs => &self.rs,
            SourceSet::Rt => &self.rt,
            SourceSet::Cs => &self.cs,
            SourceSet::Ct => &self.ct,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledMention> {
        self.rs.iter().chain(&self.rt).chain(&self.cs).chain(&self.ct)
    }

    /// Mention ids carrying a distant relation label (`Rs ∪ Rt`).
    pub fn relation_labeled_ids(&self) -> BTreeSet<&str> {
        self.rs
            .iter()
            .chain(&self.rt)
            .map(|lm| lm.mention.mention_id.as_str())
            .collect()
    }

    /// `Rs` seeds grouped by relation.
    pub fn seeds_by_relation(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for lm in &self.rs {
            out.entry(lm.label.clone()).or_default().insert(lm.mention.mention_id.clone());
        }
        out
    }

    /// First occurrence of every mention across all sets, by id.
    pub fn mention_index(&self) -> BTreeMap<&str, &Mention> {
        let mut out = BTreeMap::new();
        for lm in self.iter() {
            out.entry(lm.mention.mention_id.as_str()).or_insert(&lm.mention);
        }
        out
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for lm in self.iter() {
            serde_json::to_writer(&mut out, lm)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut sets = MentionSets::default();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let lm: LabeledMention =
                serde_json::from_str(&line).map_err(|e| Error::parse(&name, i + 1, e.to_string()))?;
            match lm.source_set {
                SourceSet::Rs => sets.rs.push(lm),
                SourceSet::Rt => sets.rt.push(lm),
                SourceSet::Cs => sets.cs.push(lm),
                SourceSet::Ct => sets.ct.push(lm),
            }
        }
        Ok(sets)
    }
}

fn sort_dedup(mut v: Vec<LabeledMention>) -> Vec<LabeledMention> {
    v.sort_by(|a, b| {
        a.mention
            .mention_id
            .cmp(&b.mention.mention_id)
            .then_with(|| a.label.cmp(&b.label))
    });
    v.dedup_by(|a, b| a.mention.mention_id == b.mention.mention_id && a.label == b.label);
    v
}

/// Distant labeling: mention `m` of a document about `e` gets relation `r`
/// when some triple `r(e, v)` has `v` equal to an item of `m`. With
/// `enforce_sections`, `m` must also sit in a section mapped to `r`.
///
/// The source set (`Rs` / `Rt`) follows each mention's corpus.
pub fn build_relation_mentions(
    mentions: &[Mention],
    triples: &[Triple],
    schema: &RelationSchema,
    enforce_sections: bool,
) -> Vec<LabeledMention> {
    let mut by_pair: HashMap<(&str, &str), BTreeSet<&str>> = HashMap::new();
    for t in triples {
        by_pair
            .entry((t.subject.as_str(), t.object.as_str()))
            .or_default()
            .insert(t.relation.as_str());
    }
    let mut out = Vec::new();
    for m in mentions {
        let mut labels = BTreeSet::new();
        for item in m.normalized_items() {
            if let Some(rels) = by_pair.get(&(m.title_entity.as_str(), item.as_str())) {
                labels.extend(rels.iter().copied());
            }
        }
        for r in labels {
            if enforce_sections {
                let fits = schema
                    .relation(r)
                    .is_some_and(|def| def.section_titles.contains(&m.section_title));
                if !fits {
                    continue;
                }
            }
            out.push(LabeledMention {
                mention: m.clone(),
                label: r.to_owned(),
                source_set: SourceSet::relation(m.corpus),
            });
        }
    }
    sort_dedup(out)
}

/// Seed expansion for concept mentions over one corpus.
///
/// Seeds are mentions with an item equal to a concept instance. MultiRankWalk
/// over the corpus's mention–feature graph extends them; a mention is kept
/// for concept `c` when `c` is its best class, its score reaches
/// `concept_score_floor`, and it ranks within `concept_top_k`. Seed mentions
/// are always kept.
pub fn expand_concept_mentions(
    mentions: &[Mention],
    seeds: &[ConceptSeed],
    schema: &RelationSchema,
    config: &PropagationConfig,
) -> Result<Vec<LabeledMention>> {
    let mut instances: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for s in seeds {
        if schema.has_concept(&s.concept) {
            instances.entry(s.instance.as_str()).or_default().insert(s.concept.as_str());
        }
    }
    let mut seed_mentions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for m in mentions {
        for item in m.normalized_items() {
            if let Some(concepts) = instances.get(item.as_str()) {
                for c in concepts {
                    seed_mentions
                        .entry((*c).to_owned())
                        .or_default()
                        .insert(m.mention_id.clone());
                }
            }
        }
    }
    let by_id: BTreeMap<&str, &Mention> = mentions.iter().map(|m| (m.mention_id.as_str(), m)).collect();
    let label = |id: &str, concept: &str| {
        let m = by_id[id];
        LabeledMention {
            mention: m.clone(),
            label: concept.to_owned(),
            source_set: SourceSet::concept(m.corpus),
        }
    };

    let mut out: Vec<LabeledMention> = Vec::new();
    for (c, ids) in &seed_mentions {
        out.extend(ids.iter().map(|id| label(id, c)));
    }

    let graph: BipartiteGraph<f64> = BipartiteGraph::from_mentions(mentions);
    let in_graph: BTreeMap<String, BTreeSet<String>> = seed_mentions
        .iter()
        .map(|(c, ids)| {
            let kept = ids.iter().filter(|id| graph.mention_idx(id).is_some()).cloned().collect();
            (c.clone(), kept)
        })
        .filter(|(_, ids): &(String, BTreeSet<String>)| !ids.is_empty())
        .collect();
    if !in_graph.is_empty() {
        let labeling = multirankwalk(&graph, &in_graph, config)?;
        for (c, ranking) in &labeling.rankings {
            out.extend(
                ranking
                    .iter()
                    .filter(|(_, s)| *s >= config.concept_score_floor)
                    .take(config.concept_top_k)
                    .map(|(id, _)| label(id, c)),
            );
        }
    }
    Ok(sort_dedup(out))
}

/// Keeps a structured-corpus concept mention only when its section is mapped
/// to a relation whose range is that concept.
pub fn filter_concept_sections(cs_raw: Vec<LabeledMention>, schema: &RelationSchema) -> Vec<LabeledMention> {
    cs_raw
        .into_iter()
        .filter(|lm| schema.section_fits_concept(&lm.mention.section_title, &lm.label))
        .collect()
}

/// Builds all four sets from the structured and target mention pools.
pub fn build_mention_sets(
    structured: &[Mention],
    target: &[Mention],
    triples: &[Triple],
    seeds: &[ConceptSeed],
    schema: &RelationSchema,
    config: &PropagationConfig,
) -> Result<MentionSets> {
    let rs = build_relation_mentions(structured, triples, schema, true);
    let rt = build_relation_mentions(target, triples, schema, false);
    let cs = filter_concept_sections(expand_concept_mentions(structured, seeds, schema, config)?, schema);
    let ct = expand_concept_mentions(target, seeds, schema, config)?;
    Ok(MentionSets { rs, rt, cs, ct })
}
