//! Sparse features for mentions (singleton NPs and coordinate lists).
//!
//! The same generator runs for propagation, training and prediction. Every
//! feature id carries a namespace prefix naming the rule that produced it:
//!
//! | prefix            | rule                                              |
//! |-------------------|---------------------------------------------------|
//! | `tok=`            | token inside the NP (every item, for lists)       |
//! | `pre=` / `suf=`   | character prefix / suffix of those tokens         |
//! | `bow=`            | sentence token outside the mention                |
//! | `win-L{k}=` / `win-R{k}=` | token `k` positions left / right of the mention |
//! | `wbg-L=` / `wbg-R=` | bigram inside the left / right window           |
//! | `vrb=`            | closest ancestor verb of the NP head              |
//! | `mod=`            | dependent of that verb                            |
//! | `path=`           | dependency labels from the NP head up to the verb |
//!
//! All token text is lowercased. Punctuation is skipped for `bow=` only.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{CoordinateList, CorpusTag, Document, PosTag, Sentence, Span, Token};
use crate::error::{Error, Result};
use crate::normalize::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Tokens on each side of the mention for `win-` / `wbg-` features.
    pub window: usize,
    pub affix_min: usize,
    pub affix_max: usize,
    pub dependency_features: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 3,
            affix_min: 2,
            affix_max: 4,
            dependency_features: true,
        }
    }
}

/// Feature id → positive count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    pub counts: BTreeMap<String, u32>,
}

impl FeatureVector {
    pub fn add(&mut self, feature: String) {
        *self.counts.entry(feature).or_insert(0) += 1;
    }

    pub fn get(&self, feature: &str) -> u32 {
        self.counts.get(feature).copied().unwrap_or(0)
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.counts.contains_key(feature)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.counts.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl FromIterator<String> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut v = FeatureVector::default();
        for f in iter {
            v.add(f);
        }
        v
    }
}

/// What a mention covers inside its sentence.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Np(Span),
    List(&'a CoordinateList),
}

impl Target<'_> {
    fn items(&self) -> Vec<Span> {
        match self {
            Target::Np(s) => vec![*s],
            Target::List(l) => l.item_spans.clone(),
        }
    }

    fn extent(&self) -> Span {
        match self {
            Target::Np(s) => *s,
            Target::List(l) => l.extent(),
        }
    }

    fn head_span(&self) -> Span {
        match self {
            Target::Np(s) => *s,
            Target::List(l) => l.head_span,
        }
    }
}

fn lower(t: &Token) -> String {
    t.surface.to_lowercase()
}

fn is_punct(t: &Token) -> bool {
    t.pos == Some(PosTag::Punct) || t.surface.chars().all(|c| c.is_ascii_punctuation())
}

pub fn extract_features(sentence: &Sentence, target: Target<'_>, config: &FeatureConfig) -> Result<FeatureVector> {
    let n = sentence.tokens.len();
    let items = target.items();
    for s in items.iter().chain(std::iter::once(&target.head_span())) {
        if s.start >= s.end || s.end > n {
            return Err(Error::SpanOutOfRange {
                start: s.start,
                end: s.end,
                len: n,
            });
        }
    }
    let extent = target.extent();
    let mut fv = FeatureVector::default();

    for item in &items {
        for tok in &sentence.tokens[item.start..item.end] {
            let word = lower(tok);
            let chars: Vec<char> = word.chars().collect();
            for len in config.affix_min..=config.affix_max {
                if len == 0 || len > chars.len() {
                    continue;
                }
                fv.add(format!("pre={}", chars[..len].iter().collect::<String>()));
                fv.add(format!("suf={}", chars[chars.len() - len..].iter().collect::<String>()));
            }
            fv.add(format!("tok={word}"));
        }
    }

    for (i, tok) in sentence.tokens.iter().enumerate() {
        if !extent.contains(i) && !is_punct(tok) {
            fv.add(format!("bow={}", lower(tok)));
        }
    }

    let left: Vec<String> = sentence.tokens[extent.start.saturating_sub(config.window)..extent.start]
        .iter()
        .map(lower)
        .collect();
    let right: Vec<String> = sentence.tokens[extent.end..(extent.end + config.window).min(n)]
        .iter()
        .map(lower)
        .collect();
    for (k, w) in left.iter().rev().enumerate() {
        fv.add(format!("win-L{}={w}", k + 1));
    }
    for (k, w) in right.iter().enumerate() {
        fv.add(format!("win-R{}={w}", k + 1));
    }
    for pair in left.windows(2) {
        fv.add(format!("wbg-L={}_{}", pair[0], pair[1]));
    }
    for pair in right.windows(2) {
        fv.add(format!("wbg-R={}_{}", pair[0], pair[1]));
    }

    if config.dependency_features && sentence.has_dependencies() {
        dependency_features(sentence, target.head_span().head(), &mut fv);
    }
    Ok(fv)
}

/// Walks `dep_head` links up from `head` to the closest VERB ancestor.
fn dependency_features(sentence: &Sentence, head: usize, fv: &mut FeatureVector) {
    let tokens = &sentence.tokens;
    let label = |i: usize| tokens[i].dep_label.clone().unwrap_or_else(|| "_".into());
    let mut path = vec![label(head)];
    let mut current = head;
    let mut steps = 0;
    let verb = loop {
        let Some(parent) = tokens[current].dep_head else {
            return;
        };
        steps += 1;
        if steps > tokens.len() {
            // cyclic annotation
            return;
        }
        if tokens[parent].pos == Some(PosTag::Verb) {
            break parent;
        }
        path.push(label(parent));
        current = parent;
    };
    fv.add(format!("vrb={}", lower(&tokens[verb])));
    for (i, tok) in tokens.iter().enumerate() {
        if tok.dep_head == Some(verb) {
            fv.add(format!("mod={}", lower(&tokens[i])));
        }
    }
    fv.add(format!("path={}", path.join("/")));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Singleton,
    List,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub mention_id: String,
    pub doc_id: String,
    pub title_entity: String,
    pub section_title: String,
    pub corpus: CorpusTag,
    pub kind: MentionKind,
    pub item_surfaces: Vec<String>,
    pub features: FeatureVector,
}

impl Mention {
    /// Normalized item surfaces.
    pub fn normalized_items(&self) -> impl Iterator<Item = String> + '_ {
        self.item_surfaces.iter().map(|s| normalize(s))
    }
}

/// Enumerates every mention of a document: one per coordinate list, and one
/// singleton per NP chunk not covered by a list.
///
/// Sentences must carry chunk annotations (see
/// [`Document::complete_annotations`]).
pub fn document_mentions(doc: &Document, config: &FeatureConfig) -> Result<Vec<Mention>> {
    let mut out = Vec::new();
    for (si, section) in doc.sections.iter().enumerate() {
        for (ti, sentence) in section.sentences.iter().enumerate() {
            if sentence.np_chunks.is_none() {
                return Err(Error::InvalidDocument {
                    doc_id: doc.doc_id.clone(),
                    message: format!("section {si} sentence {ti} has no np_chunks; run ingestion first"),
                });
            }
            let make = |kind, span: Span, items: Vec<String>, features| Mention {
                mention_id: format!(
                    "{}:{si}:{ti}:{}{span}",
                    doc.doc_id,
                    if kind == MentionKind::List { "L" } else { "" }
                ),
                doc_id: doc.doc_id.clone(),
                title_entity: doc.title_entity.clone(),
                section_title: section.title.clone(),
                corpus: doc.corpus_tag,
                kind,
                item_surfaces: items,
                features,
            };
            let mut in_list = BTreeSet::new();
            for list in sentence.lists() {
                in_list.extend(list.item_spans.iter().copied());
                let items = list.item_spans.iter().map(|s| sentence.surface(*s)).collect();
                let features = extract_features(sentence, Target::List(list), config)?;
                out.push(make(MentionKind::List, list.extent(), items, features));
            }
            for chunk in sentence.chunks() {
                if in_list.contains(chunk) {
                    continue;
                }
                let features = extract_features(sentence, Target::Np(*chunk), config)?;
                out.push(make(MentionKind::Singleton, *chunk, vec![sentence.surface(*chunk)], features));
            }
        }
    }
    Ok(out)
}

pub fn corpus_mentions(docs: &[Document], config: &FeatureConfig) -> Result<Vec<Mention>> {
    let mut all = Vec::new();
    for doc in docs {
        all.extend(document_mentions(doc, config)?);
    }
    Ok(all)
}

/// Training-time feature vocabulary: features with document frequency 1 and
/// the most frequent 5% (by document frequency) are removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFilter {
    pub kept: BTreeSet<String>,
}

/// Share of the vocabulary cut from the top of the document-frequency ranking.
pub const TOP_FREQUENCY_CUT: f64 = 0.05;

impl FeatureFilter {
    pub fn allows(&self, feature: &str) -> bool {
        self.kept.contains(feature)
    }

    pub fn apply(&self, v: &FeatureVector) -> FeatureVector {
        FeatureVector {
            counts: v
                .counts
                .iter()
                .filter(|(k, _)| self.allows(k))
                .map(|(k, c)| (k.clone(), *c))
                .collect(),
        }
    }
}

pub fn build_feature_filter<'a, I>(training_vectors: I) -> FeatureFilter
where
    I: IntoIterator<Item = &'a FeatureVector>,
{
    let mut df: HashMap<&str, usize> = HashMap::new();
    for v in training_vectors {
        for f in v.counts.keys() {
            *df.entry(f.as_str()).or_insert(0) += 1;
        }
    }
    let vocab = df.len();
    let top = (TOP_FREQUENCY_CUT * vocab as f64).ceil() as usize;
    let mut by_freq: Vec<(&str, usize)> = df.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let kept = by_freq
        .into_iter()
        .skip(top)
        .filter(|(_, d)| *d > 1)
        .map(|(f, _)| f.to_owned())
        .collect();
    FeatureFilter { kept }
}
