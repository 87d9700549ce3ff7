//! Relation schema and seed knowledge (relation triples, concept instances).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub range_concept: String,
    /// Normalized section titles (aliases allowed) that express this relation
    /// in the structured corpus.
    pub section_titles: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSchema {
    pub relations: Vec<RelationDef>,
    pub concepts: Vec<String>,
}

impl RelationSchema {
    /// Normalizes section titles and checks the schema invariants.
    pub fn new(relations: Vec<RelationDef>, concepts: Vec<String>) -> Result<Self> {
        let relations: Vec<RelationDef> = relations
            .into_iter()
            .map(|r| RelationDef {
                section_titles: r.section_titles.iter().map(|t| normalize(t)).collect(),
                ..r
            })
            .collect();

        let concept_set: BTreeSet<&str> = concepts.iter().map(String::as_str).collect();
        if concept_set.len() != concepts.len() {
            return Err(Error::Schema("duplicate concept name".into()));
        }
        let mut names = BTreeSet::new();
        let mut section_owner: BTreeMap<&str, &str> = BTreeMap::new();
        for r in &relations {
            if r.name.is_empty() {
                return Err(Error::Schema("relation with empty name".into()));
            }
            if !names.insert(r.name.as_str()) {
                return Err(Error::Schema(format!("duplicate relation {:?}", r.name)));
            }
            if !concept_set.contains(r.range_concept.as_str()) {
                return Err(Error::Schema(format!(
                    "relation {:?} references unknown concept {:?}",
                    r.name, r.range_concept
                )));
            }
            for t in &r.section_titles {
                if let Some(other) = section_owner.insert(t, &r.name) {
                    return Err(Error::Schema(format!(
                        "section title {t:?} is mapped to both {other:?} and {:?}",
                        r.name
                    )));
                }
            }
        }
        Ok(RelationSchema { relations, concepts })
    }

    pub fn relation(&self, name: &str) -> Option<&RelationDef> {
        self.relations.iter().find(|r| r.name == name)
    }

    pub fn has_concept(&self, name: &str) -> bool {
        self.concepts.iter().any(|c| c == name)
    }

    pub fn relation_names(&self) -> impl Iterator<Item = &str> {
        self.relations.iter().map(|r| r.name.as_str())
    }

    /// The relation whose structured-corpus sections include `section_title`.
    pub fn relation_for_section(&self, section_title: &str) -> Option<&RelationDef> {
        self.relations.iter().find(|r| r.section_titles.contains(section_title))
    }

    /// Whether `section_title` is mapped to any relation with range `concept`.
    pub fn section_fits_concept(&self, section_title: &str, concept: &str) -> bool {
        self.relations
            .iter()
            .any(|r| r.range_concept == concept && r.section_titles.contains(section_title))
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<RelationSchema> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text)
}

pub fn parse_schema(json: &str) -> Result<RelationSchema> {
    #[derive(Deserialize)]
    struct Raw {
        relations: Vec<RelationDef>,
        concepts: Vec<String>,
    }
    let raw: Raw = serde_json::from_str(json)?;
    RelationSchema::new(raw.relations, raw.concepts)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub relation: String,
    pub subject: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptSeed {
    pub concept: String,
    pub instance: String,
}

/// Noise filter applied to KB values while loading.
///
/// Records with a value longer than `max_len` characters, or containing a
/// comma when `reject_commas` is set, are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFilter {
    pub max_len: Option<usize>,
    pub reject_commas: bool,
}

impl Default for SeedFilter {
    fn default() -> Self {
        SeedFilter {
            max_len: Some(60),
            reject_commas: true,
        }
    }
}

impl SeedFilter {
    pub const NONE: SeedFilter = SeedFilter {
        max_len: None,
        reject_commas: false,
    };

    fn accepts(&self, value: &str) -> bool {
        if self.max_len.is_some_and(|m| value.chars().count() > m) {
            return false;
        }
        !(self.reject_commas && value.contains(','))
    }
}

fn tsv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split('\t').map(str::to_owned).collect()))
        .collect())
}

pub fn load_triples(path: impl AsRef<Path>, schema: &RelationSchema) -> Result<Vec<Triple>> {
    load_triples_with(path, schema, SeedFilter::default())
}

/// Reads `relation<TAB>subject<TAB>object` rows. Output is normalized,
/// sorted and duplicate-free.
pub fn load_triples_with(path: impl AsRef<Path>, schema: &RelationSchema, filter: SeedFilter) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut out = BTreeSet::new();
    for (line, cols) in tsv_rows(path)? {
        let [relation, subject, object] = <[String; 3]>::try_from(cols)
            .map_err(|c| Error::parse(&name, line, format!("expected 3 tab-separated fields, found {}", c.len())))?;
        let relation = relation.trim().to_owned();
        if schema.relation(&relation).is_none() {
            return Err(Error::parse(&name, line, format!("unknown relation {relation:?}")));
        }
        let (subject, object) = (normalize(&subject), normalize(&object));
        if subject.is_empty() || object.is_empty() {
            return Err(Error::parse(&name, line, "empty subject or object"));
        }
        if !filter.accepts(&subject) || !filter.accepts(&object) {
            continue;
        }
        out.insert(Triple {
            relation,
            subject,
            object,
        });
    }
    Ok(out.into_iter().collect())
}

pub fn load_concept_seeds(path: impl AsRef<Path>, schema: &RelationSchema) -> Result<Vec<ConceptSeed>> {
    load_concept_seeds_with(path, schema, SeedFilter::default())
}

/// Reads `concept<TAB>instance` rows. Output is normalized, sorted and
/// duplicate-free.
pub fn load_concept_seeds_with(
    path: impl AsRef<Path>,
    schema: &RelationSchema,
    filter: SeedFilter,
) -> Result<Vec<ConceptSeed>> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let mut out = BTreeSet::new();
    for (line, cols) in tsv_rows(path)? {
        let [concept, instance] = <[String; 2]>::try_from(cols)
            .map_err(|c| Error::parse(&name, line, format!("expected 2 tab-separated fields, found {}", c.len())))?;
        let concept = concept.trim().to_owned();
        if !schema.has_concept(&concept) {
            return Err(Error::parse(&name, line, format!("unknown concept {concept:?}")));
        }
        let instance = normalize(&instance);
        if instance.is_empty() {
            return Err(Error::parse(&name, line, "empty instance"));
        }
        if !filter.accepts(&instance) {
            continue;
        }
        out.insert(ConceptSeed { concept, instance });
    }
    Ok(out.into_iter().collect())
}

/// Exact match of a normalized NP surface against a set of normalized values.
pub fn match_value(np_surface: &str, values: &BTreeSet<String>) -> bool {
    values.contains(&normalize(np_surface))
}
