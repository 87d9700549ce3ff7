//! Entity-centric documents: sections, sentences, tokens, NP chunks and
//! coordinate lists, plus the JSONL corpus reader and the fallback chunker.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::normalize::normalize;

/// Coarse part-of-speech tagset understood by the chunker and feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Adj,
    Verb,
    Det,
    Conj,
    Punct,
    Other,
}

impl PosTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Adj => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Det => "DET",
            PosTag::Conj => "CONJ",
            PosTag::Punct => "PUNCT",
            PosTag::Other => "OTHER",
        }
    }

    pub fn is_nominal(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Propn)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "NOUN" => PosTag::Noun,
            "PROPN" => PosTag::Propn,
            "ADJ" => PosTag::Adj,
            "VERB" => PosTag::Verb,
            "DET" => PosTag::Det,
            "CONJ" => PosTag::Conj,
            "PUNCT" => PosTag::Punct,
            "OTHER" => PosTag::Other,
            other => return Err(Error::Config(format!("unknown POS tag {other:?}"))),
        })
    }
}

/// Maps arbitrary tag strings from an annotated corpus onto [`PosTag`].
///
/// Exact entries win; otherwise the longest matching prefix applies;
/// anything else becomes [`PosTag::Other`].
#[derive(Debug, Clone)]
pub struct TagMap {
    exact: BTreeMap<String, PosTag>,
    prefixes: Vec<(String, PosTag)>,
}

impl Default for TagMap {
    fn default() -> Self {
        let exact = [
            ("NOUN", PosTag::Noun),
            ("PROPN", PosTag::Propn),
            ("ADJ", PosTag::Adj),
            ("VERB", PosTag::Verb),
            ("AUX", PosTag::Verb),
            ("DET", PosTag::Det),
            ("CONJ", PosTag::Conj),
            ("CCONJ", PosTag::Conj),
            ("CC", PosTag::Conj),
            ("PUNCT", PosTag::Punct),
            ("OTHER", PosTag::Other),
            ("NNP", PosTag::Propn),
            ("NNPS", PosTag::Propn),
            (",", PosTag::Punct),
            (".", PosTag::Punct),
            (":", PosTag::Punct),
            ("``", PosTag::Punct),
            ("''", PosTag::Punct),
            ("-LRB-", PosTag::Punct),
            ("-RRB-", PosTag::Punct),
        ];
        let prefixes = [
            ("NN", PosTag::Noun),
            ("JJ", PosTag::Adj),
            ("VB", PosTag::Verb),
            ("DT", PosTag::Det),
        ];
        TagMap {
            exact: exact.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            prefixes: prefixes.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Deserialize)]
struct TagMapFile {
    #[serde(default)]
    exact: BTreeMap<String, PosTag>,
    #[serde(default)]
    prefixes: BTreeMap<String, PosTag>,
}

impl TagMap {
    /// Loads a JSON mapping `{exact: {tag: POS}, prefixes: {prefix: POS}}`
    /// layered over the defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TagMapFile = serde_json::from_str(&text)?;
        let mut map = TagMap::default();
        map.exact.extend(file.exact);
        for (prefix, tag) in file.prefixes {
            map.prefixes.retain(|(p, _)| *p != prefix);
            map.prefixes.push((prefix, tag));
        }
        Ok(map)
    }

    pub fn map(&self, tag: &str) -> PosTag {
        if let Some(t) = self.exact.get(tag) {
            return *t;
        }
        self.prefixes
            .iter()
            .filter(|(p, _)| tag.starts_with(p.as_str()))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, t)| *t)
            .unwrap_or(PosTag::Other)
    }
}

/// Half-open token range `start..end` within a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Last token index; the head of an English NP.
    pub fn head(&self) -> usize {
        self.end - 1
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<PosTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_head: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep_label: Option<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: PosTag) -> Self {
        Token {
            surface: surface.into(),
            pos: Some(pos),
            dep_head: None,
            dep_label: None,
        }
    }

    fn is_comma(&self) -> bool {
        self.surface == ","
    }

    fn is_coordinator(&self) -> bool {
        match self.pos {
            Some(PosTag::Conj) => true,
            Some(_) => false,
            None => matches!(self.surface.to_lowercase().as_str(), "and" | "or" | "nor"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateList {
    #[serde(rename = "items")]
    pub item_spans: Vec<Span>,
    #[serde(rename = "head")]
    pub head_span: Span,
}

impl CoordinateList {
    /// Covering range from the first item's start to the last item's end.
    pub fn extent(&self) -> Span {
        let start = self.item_spans.iter().map(|s| s.start).min().unwrap_or(0);
        let end = self.item_spans.iter().map(|s| s.end).max().unwrap_or(0);
        Span { start, end }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub np_chunks: Option<Vec<Span>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate_lists: Option<Vec<CoordinateList>>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            tokens,
            np_chunks: None,
            coordinate_lists: None,
        }
    }

    pub fn surface(&self, span: Span) -> String {
        self.tokens[span.start..span.end]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn chunks(&self) -> &[Span] {
        self.np_chunks.as_deref().unwrap_or(&[])
    }

    pub fn lists(&self) -> &[CoordinateList] {
        self.coordinate_lists.as_deref().unwrap_or(&[])
    }

    pub fn has_dependencies(&self) -> bool {
        self.tokens.iter().any(|t| t.dep_head.is_some())
    }

    /// Fills absent chunk and list annotations with the built-in chunker and
    /// list detector. Present annotations are left untouched.
    pub fn complete_annotations(&mut self) -> Result<()> {
        if self.np_chunks.is_none() {
            self.np_chunks = Some(chunk_sentence(&self.tokens)?);
        }
        if self.coordinate_lists.is_none() {
            self.coordinate_lists = Some(detect_coordinate_lists(self));
        }
        Ok(())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.surface.is_empty() {
                return Err(format!("token {i} has an empty surface"));
            }
            if let Some(h) = tok.dep_head {
                if h >= n {
                    return Err(format!("token {i} has dep_head {h} outside the sentence"));
                }
                if h == i {
                    return Err(format!("token {i} is its own dep_head"));
                }
            }
        }
        let mut chunks: Vec<Span> = self.chunks().to_vec();
        for c in &chunks {
            if c.start >= c.end || c.end > n {
                return Err(format!("np_chunk {c} out of range for {n} tokens"));
            }
        }
        chunks.sort();
        if chunks.windows(2).any(|w| w[0].overlaps(&w[1])) {
            return Err("np_chunks overlap".into());
        }
        for list in self.lists() {
            if list.item_spans.is_empty() {
                return Err("coordinate list without items".into());
            }
            for item in &list.item_spans {
                if chunks.binary_search(item).is_err() {
                    return Err(format!("coordinate list item {item} is not an np_chunk"));
                }
            }
            if !list.item_spans.contains(&list.head_span) {
                return Err(format!("coordinate list head {} is not one of its items", list.head_span));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    pub sentences: Vec<Sentence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusTag {
    Structured,
    Target,
}

impl fmt::Display for CorpusTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusTag::Structured => "structured",
            CorpusTag::Target => "target",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title_entity: String,
    pub sections: Vec<Section>,
    #[serde(skip, default = "default_tag")]
    pub corpus_tag: CorpusTag,
}

fn default_tag() -> CorpusTag {
    CorpusTag::Target
}

impl Document {
    pub fn complete_annotations(&mut self) -> Result<()> {
        for section in &mut self.sections {
            for sentence in &mut section.sentences {
                sentence.complete_annotations()?;
            }
        }
        Ok(())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.doc_id.is_empty() {
            return Err("empty doc_id".into());
        }
        if self.title_entity.is_empty() {
            return Err("empty title_entity".into());
        }
        for (si, section) in self.sections.iter().enumerate() {
            if section.title.is_empty() {
                return Err(format!("section {si} has an empty title"));
            }
            for (ti, sentence) in section.sentences.iter().enumerate() {
                sentence
                    .validate()
                    .map_err(|m| format!("section {si} sentence {ti}: {m}"))?;
            }
        }
        Ok(())
    }
}

fn field<'a>(obj: &'a Value, key: &str, ctx: &str) -> std::result::Result<&'a Value, String> {
    obj.get(key).ok_or_else(|| format!("{ctx}: missing field \"{key}\""))
}

fn str_field(obj: &Value, key: &str, ctx: &str) -> std::result::Result<String, String> {
    field(obj, key, ctx)?
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| format!("{ctx}: field \"{key}\" must be a string"))
}

fn array_field<'a>(obj: &'a Value, key: &str, ctx: &str) -> std::result::Result<&'a Vec<Value>, String> {
    field(obj, key, ctx)?
        .as_array()
        .ok_or_else(|| format!("{ctx}: field \"{key}\" must be an array"))
}

fn parse_span(v: &Value, ctx: &str) -> std::result::Result<Span, String> {
    serde_json::from_value::<[usize; 2]>(v.clone())
        .map(Span::from)
        .map_err(|_| format!("{ctx}: expected [start, end]"))
}

fn parse_token(v: &Value, tags: &TagMap, ctx: &str) -> std::result::Result<Token, String> {
    let surface = str_field(v, "surface", ctx)?;
    let pos = match v.get("pos") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(tags.map(s)),
        Some(_) => return Err(format!("{ctx}: field \"pos\" must be a string")),
    };
    let dep_head = match v.get("dep_head") {
        None | Some(Value::Null) => None,
        Some(h) => Some(
            h.as_u64()
                .ok_or_else(|| format!("{ctx}: field \"dep_head\" must be a non-negative integer"))?
                as usize,
        ),
    };
    let dep_label = match v.get("dep_label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(format!("{ctx}: field \"dep_label\" must be a string")),
    };
    Ok(Token {
        surface,
        pos,
        dep_head,
        dep_label,
    })
}

fn parse_sentence(v: &Value, tags: &TagMap, ctx: &str) -> std::result::Result<Sentence, String> {
    let tokens = array_field(v, "tokens", ctx)?
        .iter()
        .enumerate()
        .map(|(i, t)| parse_token(t, tags, &format!("{ctx}.tokens[{i}]")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let np_chunks = match v.get("np_chunks") {
        None | Some(Value::Null) => None,
        Some(_) => Some(
            array_field(v, "np_chunks", ctx)?
                .iter()
                .enumerate()
                .map(|(i, s)| parse_span(s, &format!("{ctx}.np_chunks[{i}]")))
                .collect::<std::result::Result<Vec<_>, _>>()?,
        ),
    };
    let coordinate_lists = match v.get("coordinate_lists") {
        None | Some(Value::Null) => None,
        Some(_) => {
            let mut lists = Vec::new();
            for (i, l) in array_field(v, "coordinate_lists", ctx)?.iter().enumerate() {
                let lctx = format!("{ctx}.coordinate_lists[{i}]");
                let item_spans = array_field(l, "items", &lctx)?
                    .iter()
                    .map(|s| parse_span(s, &lctx))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let head_span = parse_span(field(l, "head", &lctx)?, &format!("{lctx}.head"))?;
                lists.push(CoordinateList {
                    item_spans,
                    head_span,
                });
            }
            Some(lists)
        }
    };
    Ok(Sentence {
        tokens,
        np_chunks,
        coordinate_lists,
    })
}

/// Parses one JSONL corpus line into a [`Document`] without the uniqueness check.
pub fn parse_document(line: &str, corpus_tag: CorpusTag, tags: &TagMap) -> std::result::Result<Document, String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    if !v.is_object() {
        return Err("expected a JSON object".into());
    }
    let doc_id = str_field(&v, "doc_id", "document")?;
    let title_entity = normalize(&str_field(&v, "title_entity", "document")?);
    let mut sections = Vec::new();
    for (si, s) in array_field(&v, "sections", "document")?.iter().enumerate() {
        let ctx = format!("sections[{si}]");
        let title = normalize(&str_field(s, "title", &ctx)?);
        let sentences = array_field(s, "sentences", &ctx)?
            .iter()
            .enumerate()
            .map(|(ti, t)| parse_sentence(t, tags, &format!("{ctx}.sentences[{ti}]")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        sections.push(Section { title, sentences });
    }
    let doc = Document {
        doc_id,
        title_entity,
        sections,
        corpus_tag,
    };
    doc.validate()?;
    Ok(doc)
}

pub fn ingest_corpus(path: impl AsRef<Path>, corpus_tag: CorpusTag) -> Result<Vec<Document>> {
    ingest_corpus_with(path, corpus_tag, &TagMap::default())
}

/// Reads a JSONL corpus, one document per line. Blank lines are skipped.
pub fn ingest_corpus_with(path: impl AsRef<Path>, corpus_tag: CorpusTag, tags: &TagMap) -> Result<Vec<Document>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document(&line, corpus_tag, tags).map_err(|m| Error::parse(&name, i + 1, m))?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::DuplicateDocument(doc.doc_id));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for doc in docs {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Fallback NP chunker: maximal `(ADJ | NOUN)* NOUN` runs, left to right.
///
/// PROPN counts as a noun.
pub fn chunk_sentence(tokens: &[Token]) -> Result<Vec<Span>> {
    let tags = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.pos.ok_or_else(|| Error::MissingPos {
                index: i,
                surface: t.surface.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut spans = Vec::new();
    let mut i = 0;
    while i < tags.len() {
        if !(tags[i].is_nominal() || tags[i] == PosTag::Adj) {
            i += 1;
            continue;
        }
        let start = i;
        let mut last_noun = None;
        while i < tags.len() && (tags[i].is_nominal() || tags[i] == PosTag::Adj) {
            if tags[i].is_nominal() {
                last_noun = Some(i);
            }
            i += 1;
        }
        if let Some(last) = last_noun {
            spans.push(Span::new(start, last + 1));
        }
    }
    Ok(spans)
}

/// Groups maximal runs of two or more NP chunks separated only by commas
/// and coordinating conjunctions. The head of each list is its last item.
pub fn detect_coordinate_lists(sentence: &Sentence) -> Vec<CoordinateList> {
    let mut chunks = sentence.chunks().to_vec();
    chunks.sort();
    let joinable = |a: &Span, b: &Span| {
        b.start > a.end
            && sentence.tokens[a.end..b.start]
                .iter()
                .all(|t| t.is_comma() || t.is_coordinator())
    };

    let mut lists = Vec::new();
    let mut run: Vec<Span> = Vec::new();
    for chunk in chunks {
        match run.last() {
            Some(prev) if joinable(prev, &chunk) => run.push(chunk),
            _ => {
                if run.len() >= 2 {
                    lists.push(finish(std::mem::take(&mut run)));
                }
                run = vec![chunk];
            }
        }
    }
    if run.len() >= 2 {
        lists.push(finish(run));
    }
    lists
}

fn finish(items: Vec<Span>) -> CoordinateList {
    let head_span = *items.last().expect("non-empty run");
    CoordinateList {
        item_spans: items,
        head_span,
    }
}
