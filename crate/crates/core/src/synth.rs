//! Synthetic drug-domain benchmark with planted facts and noisy distant labels.
//!
//! Every drug has true `usedToTreat`, `usedToPrevent` and `sideEffect`
//! values. The KB holds `kb_triples` of those facts. Structured documents
//! put facts under the mapped section titles; target documents mix relation
//! sentences with distractor sentences that mention diseases or symptoms
//! without expressing any relation. Distractor sentences that mention a KB
//! value of the document's drug are added until they make up
//! `spurious_rate` of the target corpus's distant labels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_corpus, CorpusTag, Document, PosTag, Section, Sentence, Token};
use crate::error::{Error, Result};
use crate::eval::{write_gold, GoldAnnotation};
use crate::kb::{ConceptSeed, RelationDef, RelationSchema, Triple};
use crate::normalize::normalize;

pub const USED_TO_TREAT: &str = "usedToTreat";
pub const USED_TO_PREVENT: &str = "usedToPrevent";
pub const SIDE_EFFECT: &str = "sideEffect";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub target_docs: usize,
    pub structured_docs: usize,
    pub eval_docs: usize,
    pub kb_triples: usize,
    /// Share of KB triples drawn from drugs that have a structured document.
    pub kb_structured_share: f64,
    /// Target share of spurious labels among target-corpus distant labels.
    pub spurious_rate: f64,
    /// Share of each concept's instances released as concept seeds.
    pub concept_seed_share: f64,
    /// Disease vocabulary size (the built-in list is extended synthetically).
    pub diseases: usize,
    pub symptoms: usize,
    /// Chance that a held-out document repeats one of its own values in a
    /// distractor sentence.
    pub own_value_distractor_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            target_docs: 300,
            structured_docs: 30,
            eval_docs: 40,
            kb_triples: 200,
            kb_structured_share: 0.5,
            spurious_rate: 0.3,
            concept_seed_share: 0.5,
            diseases: 400,
            symptoms: 300,
            own_value_distractor_rate: 0.15,
        }
    }
}

/// Sentence position `(doc_id, section index, sentence index)`.
pub type SentenceRef = (String, usize, usize);

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub schema: RelationSchema,
    pub triples: Vec<Triple>,
    pub concept_seeds: Vec<ConceptSeed>,
    pub structured: Vec<Document>,
    pub target: Vec<Document>,
    pub eval: Vec<Document>,
    pub gold: Vec<GoldAnnotation>,
    /// Target sentences that mention a KB value without expressing a relation.
    pub spurious_sentences: BTreeSet<SentenceRef>,
    /// Target sentences that express a relation with at least one KB value.
    pub labeled_sentences: BTreeSet<SentenceRef>,
    /// Every sentence of any corpus that expresses a relation.
    pub relation_sentences: BTreeMap<SentenceRef, String>,
    /// Concept of every disease and symptom phrase in the vocabulary.
    pub value_concepts: BTreeMap<String, String>,
}

const DISEASES: &[&str] = &[
    "asthma", "hypertension", "migraine", "arthritis", "diabetes", "psoriasis", "high blood pressure",
    "heart failure", "acne", "angina", "epilepsy", "gout", "malaria", "influenza", "anemia", "glaucoma",
    "eczema", "bronchitis", "pneumonia", "osteoporosis", "tuberculosis", "hepatitis", "depression",
    "anxiety", "schizophrenia", "lupus", "rosacea", "sinusitis", "tonsillitis", "cystitis", "colitis",
    "gastritis", "pancreatitis", "dermatitis", "conjunctivitis", "meningitis", "shingles", "measles",
    "stroke", "heart attack", "blood clots", "kidney stones", "stomach ulcers", "obesity", "scabies",
    "thrush", "chronic pain", "acid reflux", "motion sickness", "allergic rhinitis", "urinary infections",
    "atrial fibrillation", "bipolar disorder", "sickle cell disease", "cold sores", "yeast infections",
    "bacterial infections", "fungal infections", "high cholesterol", "hay fever",
];

const SYMPTOMS: &[&str] = &[
    "nausea", "headache", "dizziness", "rash", "fatigue", "drowsiness", "dry mouth", "blurred vision",
    "stomach upset", "muscle pain", "hair loss", "weight gain", "constipation", "diarrhea", "vomiting",
    "itching", "sweating", "tremor", "cough", "fever", "chills", "swelling", "bruising", "bleeding",
    "heartburn", "bloating", "cramps", "joint pain", "back pain", "chest pain", "nosebleeds", "hives",
    "palpitations", "confusion", "nervousness", "restlessness", "weakness", "numbness", "ringing ears",
    "poor appetite", "dark urine", "pale skin", "hot flashes", "night sweats", "mood changes",
    "sore throat", "runny nose", "hoarseness", "leg cramps", "skin peeling",
];

const ADJECTIVES: &[&str] = &[
    "high", "chronic", "allergic", "dry", "blurred", "urinary", "bipolar", "sickle", "cold", "bacterial",
    "fungal", "atrial", "acid", "common", "most", "white", "lower", "mild", "severe", "serious", "dark", "pale",
    "hot", "sore", "runny", "daily", "other", "new", "first", "certain", "rare", "sudden", "poor", "adverse",
    "several",
];

const VERBS: &[&str] = &[
    "is", "are", "used", "treat", "treats", "prescribe", "approved", "helps", "control", "relieves",
    "prevent", "lowers", "take", "avoid", "protects", "reduces", "getting", "stops", "coming", "cause",
    "include", "report", "taking", "occur", "experience", "produce", "tell", "have", "need", "lead", "call",
    "gets", "talk", "store", "comes", "keep", "swallow", "indicated", "result", "use", "contraindicated",
    "should", "may", "can", "do", "seek", "develop", "notice", "eases", "manage", "fights", "ward", "shields",
    "monitor", "check", "make", "feel", "reported", "observed", "warn", "discuss", "worsen", "resolve",
    "contains", "answer", "sold",
];

const DETS: &[&str] = &["the", "a", "an", "this", "your", "some", "any", "all", "these", "each"];
const CONJS: &[&str] = &["and", "or"];

fn tag_word(word: &str) -> PosTag {
    if word.chars().all(|c| c.is_ascii_punctuation()) {
        PosTag::Punct
    } else if ADJECTIVES.contains(&word) {
        PosTag::Adj
    } else if VERBS.contains(&word) {
        PosTag::Verb
    } else if DETS.contains(&word) {
        PosTag::Det
    } else if CONJS.contains(&word) {
        PosTag::Conj
    } else if matches!(
        word,
        "to" | "for" | "of" | "in" | "with" | "at" | "from" | "if" | "against" | "after" | "during" | "not"
            | "away" | "back" | "you" | "it" | "who" | "by" | "as" | "on" | "off" | "when" | "about" | "than"
            | "within" | "while" | "often" | "under" | "before" | "worse"
    ) {
        PosTag::Other
    } else {
        PosTag::Noun
    }
}

fn value_tokens(value: &str) -> Vec<Token> {
    let words: Vec<&str> = value.split(' ').collect();
    words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            // every word but the last may be an adjective; the last is the head noun
            let pos = if i + 1 < words.len() && ADJECTIVES.contains(w) {
                PosTag::Adj
            } else if *w == "of" {
                PosTag::Other
            } else {
                PosTag::Noun
            };
            Token::new(*w, pos)
        })
        .collect()
}

/// Renders a template: `{D}` is the drug, `{X}` the value slot.
fn render<S: AsRef<str>>(template: &str, drug: &str, values: &[S]) -> Sentence {
    let mut tokens = Vec::new();
    for word in template.split_whitespace() {
        match word {
            "{D}" => tokens.push(Token::new(drug, PosTag::Propn)),
            "{X}" => {
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        if i + 1 == values.len() {
                            tokens.push(Token::new("and", PosTag::Conj));
                        } else {
                            tokens.push(Token::new(",", PosTag::Punct));
                        }
                    }
                    tokens.extend(value_tokens(v.as_ref()));
                }
            }
            w => tokens.push(Token::new(w, tag_word(w))),
        }
    }
    Sentence::new(tokens)
}

const TARGET_TREAT: &[&str] = &[
    "{D} is used to treat {X} .",
    "{D} treats {X} in adults .",
    "doctors prescribe {D} for {X} .",
    "{D} is approved for the treatment of {X} .",
    "{D} helps control {X} .",
    "this medicine relieves {X} .",
    "{D} eases {X} within days .",
    "{D} fights {X} .",
];

const TARGET_PREVENT: &[&str] = &[
    "{D} is used to prevent {X} .",
    "{D} lowers the risk of {X} .",
    "take {D} daily to avoid {X} .",
    "{D} protects against {X} .",
    "{D} reduces the chance of getting {X} .",
    "this medicine helps ward off {X} .",
    "{D} shields patients from {X} .",
];

const TARGET_SIDE: &[&str] = &[
    "{D} may cause {X} .",
    "common side effects include {X} .",
    "some patients report {X} after taking {D} .",
    "you may experience {X} .",
    "{D} can produce {X} in some people .",
    "users often notice {X} during the first weeks .",
    "{X} may develop while taking {D} .",
];

const TARGET_DISTRACTOR: &[&str] = &[
    "tell your doctor if you have a history of {X} .",
    "do not take {D} if you have {X} .",
    "patients with {X} need a lower dose .",
    "an overdose may lead to {X} .",
    "call your doctor if {X} gets worse .",
    "people with {X} should talk to a pharmacist .",
    "discuss {X} with your doctor before taking {D} .",
    "{D} is not studied in patients with {X} .",
];

const TARGET_FILLER: &[&str] = &[
    "store {D} at room temperature .",
    "{D} comes as a tablet .",
    "keep this medicine away from children .",
    "swallow the tablet with water .",
    "your pharmacist can answer questions about {D} .",
    "{D} is sold under several brand names .",
];

const TARGET_SECTIONS: &[&str] = &["overview", "about this medicine", "what to know", "safety", "details", "before you start"];

const STRUCT_TREAT: &[&str] = &[
    "{D} is indicated for the treatment of {X} .",
    "{D} is indicated for {X} .",
    "{D} is used to treat {X} .",
];

const STRUCT_PREVENT: &[&str] = &[
    "{D} is indicated for the prevention of {X} .",
    "{D} is used to prevent {X} .",
    "{D} lowers the risk of {X} .",
];

const STRUCT_SIDE: &[&str] = &[
    "adverse reactions include {X} .",
    "the most common adverse reactions are {X} .",
    "{D} may cause {X} .",
];

const STRUCT_WARNING: &[&str] = &[
    "use with caution in patients with {X} .",
    "{D} is contraindicated in patients with {X} .",
    "overdosage may result in {X} .",
];

const STRUCT_DESCRIPTION: &[&str] = &["{D} is a white tablet .", "each tablet contains {D} ."];

/// Disease and symptom phrases available to the generator.
#[derive(Debug, Clone)]
struct Vocab {
    diseases: Vec<String>,
    symptoms: Vec<String>,
}

const BODY_PARTS: &[&str] = &[
    "stomach", "muscle", "joint", "back", "chest", "skin", "eye", "ear", "throat", "neck", "leg", "arm", "hand",
    "foot", "jaw", "hip", "knee", "shoulder", "gum", "tongue", "lip", "scalp", "wrist", "ankle",
];
const COMPLAINTS: &[&str] = &[
    "pain", "swelling", "cramps", "numbness", "itching", "redness", "stiffness", "tingling", "spasms",
    "irritation", "dryness", "burning", "soreness", "tenderness", "twitching", "aches",
];
const DISEASE_SUFFIXES: &[&str] = &["itis", "osis", "emia", "algia", "opathy", "oma", "iasis", "ism"];
const DISEASE_ADJECTIVES: &[&str] = &["chronic", "acute", "severe", "mild", "allergic", "bacterial"];

impl Vocab {
    fn generate(rng: &mut ChaCha8Rng, diseases: usize, symptoms: usize) -> Vocab {
        const ONSETS: &[&str] = &["b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "br", "gr", "pl", "st"];
        const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "ou"];
        let mut seen: BTreeSet<String> = DISEASES.iter().chain(SYMPTOMS).map(|s| s.to_string()).collect();
        let mut dis: Vec<String> = DISEASES.iter().map(|s| s.to_string()).collect();
        while dis.len() < diseases {
            let mut root = String::new();
            for _ in 0..rng.gen_range(2..=3) {
                root.push_str(ONSETS.choose(rng).expect("onsets"));
                root.push_str(VOWELS.choose(rng).expect("vowels"));
            }
            root.push_str(ONSETS.choose(rng).expect("onsets"));
            root.push_str(DISEASE_SUFFIXES.choose(rng).expect("suffixes"));
            let name = if rng.gen_bool(0.3) {
                format!("{} {root}", DISEASE_ADJECTIVES.choose(rng).expect("adjectives"))
            } else {
                root
            };
            if seen.insert(name.clone()) {
                dis.push(name);
            }
        }
        let mut sym: Vec<String> = SYMPTOMS.iter().map(|s| s.to_string()).collect();
        let mut combos: Vec<String> = BODY_PARTS
            .iter()
            .flat_map(|b| COMPLAINTS.iter().map(move |c| format!("{b} {c}")))
            .filter(|c| !seen.contains(c))
            .collect();
        combos.shuffle(rng);
        sym.extend(combos.into_iter().take(symptoms.saturating_sub(sym.len())));
        Vocab {
            diseases: dis,
            symptoms: sym,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Facts {
    treat: Vec<String>,
    prevent: Vec<String>,
    side: Vec<String>,
}

impl Facts {
    fn of(&self, relation: &str) -> &[String] {
        match relation {
            USED_TO_TREAT => &self.treat,
            USED_TO_PREVENT => &self.prevent,
            _ => &self.side,
        }
    }

    fn all(&self) -> BTreeSet<&str> {
        self.treat
            .iter()
            .chain(&self.prevent)
            .chain(&self.side)
            .map(String::as_str)
            .collect()
    }
}

const RELATIONS: [&str; 3] = [SIDE_EFFECT, USED_TO_PREVENT, USED_TO_TREAT];

fn drug_names(rng: &mut ChaCha8Rng, count: usize) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "cl", "pr", "tr", "x"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ia", "eo"];
    const ENDINGS: &[&str] = &[
        "mab", "pril", "sartan", "olol", "azole", "statin", "cillin", "mycin", "tinib", "vir", "dronate", "zepam",
        "pine", "xacin",
    ];
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut name = String::new();
        for _ in 0..rng.gen_range(2..=3) {
            name.push_str(ONSETS.choose(rng).expect("onsets"));
            name.push_str(VOWELS.choose(rng).expect("vowels"));
        }
        name.push_str(ENDINGS.choose(rng).expect("endings"));
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out
}

fn draw_facts(rng: &mut ChaCha8Rng, vocab: &Vocab) -> Facts {
    let mut diseases: Vec<String> = vocab.diseases.choose_multiple(rng, 6).cloned().collect();
    let treat_n = rng.gen_range(2..=4);
    let prevent_n = rng.gen_range(1..=2);
    let treat = diseases.drain(..treat_n).collect();
    let prevent = diseases.drain(..prevent_n).collect();
    let side_n = rng.gen_range(2..=5);
    let side = vocab.symptoms.choose_multiple(rng, side_n).cloned().collect();
    Facts { treat, prevent, side }
}

fn target_templates(relation: &str) -> &'static [&'static str] {
    match relation {
        USED_TO_TREAT => TARGET_TREAT,
        USED_TO_PREVENT => TARGET_PREVENT,
        _ => TARGET_SIDE,
    }
}

fn struct_templates(relation: &str) -> &'static [&'static str] {
    match relation {
        USED_TO_TREAT => STRUCT_TREAT,
        USED_TO_PREVENT => STRUCT_PREVENT,
        _ => STRUCT_SIDE,
    }
}

fn struct_section(relation: &str) -> &'static str {
    match relation {
        USED_TO_TREAT => "uses",
        USED_TO_PREVENT => "prevention",
        _ => "side effects",
    }
}

#[derive(Debug, Clone)]
enum Planned {
    Relation(&'static str, Vec<String>),
    Distractor(String),
    Filler,
}

/// Splits facts into singleton sentences and occasional lists.
fn plan_relation_sentences(rng: &mut ChaCha8Rng, relation: &'static str, values: &[String]) -> Vec<Planned> {
    let mut values = values.to_vec();
    values.shuffle(rng);
    let mut out = Vec::new();
    while !values.is_empty() {
        let take = if values.len() >= 2 && rng.gen_bool(0.4) {
            rng.gen_range(2..=values.len().min(3))
        } else {
            1
        };
        out.push(Planned::Relation(relation, values.drain(..take).collect()));
    }
    out
}

fn distractor_value(rng: &mut ChaCha8Rng, vocab: &Vocab, excluded: &BTreeSet<&str>) -> String {
    loop {
        let pool = if rng.gen_bool(0.5) { &vocab.diseases } else { &vocab.symptoms };
        let v = pool.choose(rng).expect("value pool");
        if !excluded.contains(v.as_str()) {
            return v.clone();
        }
    }
}

/// Sentence plan of one target-style document before rendering.
fn plan_target_doc(rng: &mut ChaCha8Rng, vocab: &Vocab, facts: &Facts) -> Vec<Planned> {
    let mut plan = Vec::new();
    for r in RELATIONS {
        plan.extend(plan_relation_sentences(rng, r, facts.of(r)));
    }
    let excluded = facts.all();
    for _ in 0..rng.gen_range(2..=4) {
        plan.push(Planned::Distractor(distractor_value(rng, vocab, &excluded)));
    }
    for _ in 0..rng.gen_range(1..=3) {
        plan.push(Planned::Filler);
    }
    plan
}

struct RenderedDoc {
    doc: Document,
    expressed: Vec<(SentenceRef, &'static str, Vec<String>)>,
    distractors: Vec<(SentenceRef, String)>,
}

fn render_target_doc(rng: &mut ChaCha8Rng, doc_id: &str, drug: &str, mut plan: Vec<Planned>) -> RenderedDoc {
    plan.shuffle(rng);
    let n_sections = rng.gen_range(2..=4).min(plan.len()).max(1);
    let mut titles: Vec<&str> = TARGET_SECTIONS.choose_multiple(rng, n_sections).copied().collect();
    titles.sort();
    let mut sections: Vec<Section> = titles
        .iter()
        .map(|t| Section {
            title: (*t).to_owned(),
            sentences: Vec::new(),
        })
        .collect();
    let mut expressed = Vec::new();
    let mut distractors = Vec::new();
    for (i, p) in plan.into_iter().enumerate() {
        let si = i % n_sections;
        let pos = (doc_id.to_owned(), si, sections[si].sentences.len());
        let sentence = match p {
            Planned::Relation(r, values) => {
                let s = render(target_templates(r).choose(rng).expect("templates"), drug, &values);
                expressed.push((pos, r, values));
                s
            }
            Planned::Distractor(v) => {
                let s = render(TARGET_DISTRACTOR.choose(rng).expect("templates"), drug, &[v.as_str()]);
                distractors.push((pos, v));
                s
            }
            Planned::Filler => render(TARGET_FILLER.choose(rng).expect("templates"), drug, &[] as &[&str]),
        };
        sections[si].sentences.push(sentence);
    }
    RenderedDoc {
        doc: Document {
            doc_id: doc_id.to_owned(),
            title_entity: normalize(drug),
            sections,
            corpus_tag: CorpusTag::Target,
        },
        expressed,
        distractors,
    }
}

fn build_structured_doc(
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
    doc_id: &str,
    drug: &str,
    facts: &Facts,
    kb_values: &[&str],
    relation_sentences: &mut BTreeMap<SentenceRef, String>,
) -> Document {
    let mut sections = vec![Section {
        title: "description".into(),
        sentences: vec![render(STRUCT_DESCRIPTION.choose(rng).expect("templates"), drug, &[] as &[&str])],
    }];
    for r in [USED_TO_TREAT, USED_TO_PREVENT, SIDE_EFFECT] {
        let si = sections.len();
        let mut sentences = Vec::new();
        for p in plan_relation_sentences(rng, r, facts.of(r)) {
            let Planned::Relation(r, values) = p else {
                unreachable!("relation plan")
            };
            // label-style phrasing half of the time, shared domain phrasing otherwise
            let templates = if rng.gen_bool(0.5) { struct_templates(r) } else { target_templates(r) };
            relation_sentences.insert((doc_id.to_owned(), si, sentences.len()), r.to_owned());
            sentences.push(render(templates.choose(rng).expect("templates"), drug, &values));
        }
        sections.push(Section {
            title: struct_section(r).into(),
            sentences,
        });
    }
    // KB values outside the mapped sections must not become relation mentions
    let mut warnings = Vec::new();
    if let Some(v) = kb_values.choose(rng) {
        warnings.push(render(STRUCT_WARNING.choose(rng).expect("templates"), drug, &[v]));
    }
    let excluded = facts.all();
    let other = distractor_value(rng, vocab, &excluded);
    warnings.push(render(STRUCT_WARNING.choose(rng).expect("templates"), drug, &[other.as_str()]));
    sections.push(Section {
        title: "warnings".into(),
        sentences: warnings,
    });
    Document {
        doc_id: doc_id.to_owned(),
        title_entity: normalize(drug),
        sections,
        corpus_tag: CorpusTag::Structured,
    }
}

pub fn drug_schema() -> RelationSchema {
    let rel = |name: &str, concept: &str, section: &str| RelationDef {
        name: name.into(),
        range_concept: concept.into(),
        section_titles: [section.to_owned()].into_iter().collect(),
    };
    RelationSchema::new(
        vec![
            rel(USED_TO_TREAT, "Disease", "Uses"),
            rel(USED_TO_PREVENT, "Disease", "Prevention"),
            rel(SIDE_EFFECT, "Symptom", "Side Effects"),
        ],
        vec!["Disease".into(), "Symptom".into()],
    )
    .expect("static schema is valid")
}

pub fn generate(config: &SynthConfig) -> Result<Benchmark> {
    if config.structured_docs > config.target_docs {
        return Err(Error::Config("structured drugs are a subset of target drugs".into()));
    }
    if !(0.0..1.0).contains(&config.spurious_rate) {
        return Err(Error::Config("spurious_rate must lie in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = Vocab::generate(&mut rng, config.diseases, config.symptoms);
    let drugs = drug_names(&mut rng, config.target_docs + config.eval_docs);
    let facts: Vec<Facts> = drugs.iter().map(|_| draw_facts(&mut rng, &vocab)).collect();

    // KB: facts of target drugs, a share of them from structured drugs
    let fact_list = |range: std::ops::Range<usize>| -> Vec<(usize, &'static str, String)> {
        let mut out = Vec::new();
        for d in range {
            for r in RELATIONS {
                out.extend(facts[d].of(r).iter().map(|v| (d, r, v.clone())));
            }
        }
        out
    };
    let struct_facts = fact_list(0..config.structured_docs);
    let other_facts = fact_list(config.structured_docs..config.target_docs);
    let from_struct = ((config.kb_triples as f64 * config.kb_structured_share).round() as usize).min(struct_facts.len());
    let from_other = (config.kb_triples - from_struct).min(other_facts.len());
    let mut kb: Vec<(usize, &'static str, String)> = struct_facts.choose_multiple(&mut rng, from_struct).cloned().collect();
    kb.extend(other_facts.choose_multiple(&mut rng, from_other).cloned());
    kb.sort();
    let mut kb_by_drug: BTreeMap<usize, BTreeSet<(&str, &str)>> = BTreeMap::new();
    for (d, r, v) in &kb {
        kb_by_drug.entry(*d).or_default().insert((r, v.as_str()));
    }
    let triples: Vec<Triple> = kb
        .iter()
        .map(|(d, r, v)| Triple {
            relation: (*r).to_owned(),
            subject: normalize(&drugs[*d]),
            object: normalize(v),
        })
        .collect();

    // Plan target docs, count genuine labels (one per relation sentence
    // holding a KB value), then add distractor sentences repeating KB values
    // until they make up the spurious share of all target labels.
    let mut plans: Vec<Vec<Planned>> = (0..config.target_docs)
        .map(|d| plan_target_doc(&mut rng, &vocab, &facts[d]))
        .collect();
    let genuine: usize = plans
        .iter()
        .enumerate()
        .map(|(d, plan)| {
            let kb_here = kb_by_drug.get(&d);
            plan.iter()
                .filter(|p| match p {
                    Planned::Relation(r, values) => values
                        .iter()
                        .any(|v| kb_here.is_some_and(|k| k.contains(&(*r, v.as_str())))),
                    _ => false,
                })
                .count()
        })
        .sum();
    let spurious_total =
        (genuine as f64 * config.spurious_rate / (1.0 - config.spurious_rate)).round() as usize;
    if spurious_total > 0 && kb.is_empty() {
        return Err(Error::Config("spurious labels need a nonempty KB".into()));
    }
    for _ in 0..spurious_total {
        let (d, _, v) = &kb[rng.gen_range(0..kb.len())];
        plans[*d].push(Planned::Distractor(v.clone()));
    }

    let mut target = Vec::new();
    let mut spurious_sentences = BTreeSet::new();
    let mut labeled_sentences = BTreeSet::new();
    let mut relation_sentences = BTreeMap::new();
    for (d, plan) in plans.into_iter().enumerate() {
        let built = render_target_doc(&mut rng, &format!("t{d:04}"), &drugs[d], plan);
        let kb_here = kb_by_drug.get(&d);
        for (pos, r, values) in &built.expressed {
            relation_sentences.insert(pos.clone(), (*r).to_owned());
            if values.iter().any(|v| kb_here.is_some_and(|k| k.contains(&(*r, v.as_str())))) {
                labeled_sentences.insert(pos.clone());
            }
        }
        for (pos, v) in &built.distractors {
            if kb_here.is_some_and(|k| k.iter().any(|(_, kv)| kv == v)) {
                spurious_sentences.insert(pos.clone());
            }
        }
        target.push(built.doc);
    }

    let mut structured = Vec::new();
    for d in 0..config.structured_docs {
        let kb_values: Vec<&str> = kb_by_drug.get(&d).into_iter().flatten().map(|(_, v)| *v).collect();
        structured.push(build_structured_doc(
            &mut rng,
            &vocab,
            &format!("s{d:04}"),
            &drugs[d],
            &facts[d],
            &kb_values,
            &mut relation_sentences,
        ));
    }

    let mut eval = Vec::new();
    let mut gold = BTreeSet::new();
    for d in config.target_docs..config.target_docs + config.eval_docs {
        let doc_id = format!("e{:04}", d - config.target_docs);
        let mut plan = plan_target_doc(&mut rng, &vocab, &facts[d]);
        // held-out drugs also mention some of their own values in distractor sentences
        for v in facts[d].all() {
            if rng.gen_bool(config.own_value_distractor_rate) {
                plan.push(Planned::Distractor(v.to_owned()));
            }
        }
        let built = render_target_doc(&mut rng, &doc_id, &drugs[d], plan);
        for (pos, r, values) in &built.expressed {
            relation_sentences.insert(pos.clone(), (*r).to_owned());
            for v in values {
                gold.insert(GoldAnnotation {
                    doc_id: doc_id.clone(),
                    relation: (*r).to_owned(),
                    value: normalize(v),
                });
            }
        }
        eval.push(built.doc);
    }

    let mut concept_seeds = Vec::new();
    for (concept, pool) in [("Disease", &vocab.diseases), ("Symptom", &vocab.symptoms)] {
        let k = (pool.len() as f64 * config.concept_seed_share).round() as usize;
        for v in pool.choose_multiple(&mut rng, k) {
            concept_seeds.push(ConceptSeed {
                concept: concept.into(),
                instance: normalize(v),
            });
        }
    }
    concept_seeds.sort();

    for doc in structured.iter_mut().chain(&mut target).chain(&mut eval) {
        doc.complete_annotations()?;
    }
    Ok(Benchmark {
        schema: drug_schema(),
        triples,
        concept_seeds,
        structured,
        target,
        eval,
        gold: gold.into_iter().collect(),
        spurious_sentences,
        labeled_sentences,
        relation_sentences,
        value_concepts: vocab
            .diseases
            .iter()
            .map(|v| (v.clone(), "Disease".to_owned()))
            .chain(vocab.symptoms.iter().map(|v| (v.clone(), "Symptom".to_owned())))
            .collect(),
    })
}

/// File names used by [`Benchmark::write_to_dir`].
pub mod files {
    pub const SCHEMA: &str = "schema.json";
    pub const TRIPLES: &str = "triples.tsv";
    pub const CONCEPT_SEEDS: &str = "concept_seeds.tsv";
    pub const STRUCTURED: &str = "structured.jsonl";
    pub const TARGET: &str = "target.jsonl";
    pub const EVAL: &str = "eval.jsonl";
    pub const GOLD: &str = "gold.tsv";
}

impl Benchmark {
    /// Writes every input file of the pipeline into `dir`.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        let mut schema = serde_json::to_string_pretty(&self.schema)?;
        schema.push('\n');
        write(files::SCHEMA, schema)?;
        write(
            files::TRIPLES,
            self.triples
                .iter()
                .map(|t| format!("{}\t{}\t{}\n", t.relation, t.subject, t.object))
                .collect(),
        )?;
        write(
            files::CONCEPT_SEEDS,
            self.concept_seeds
                .iter()
                .map(|s| format!("{}\t{}\n", s.concept, s.instance))
                .collect(),
        )?;
        write_corpus(dir.join(files::STRUCTURED), &self.structured)?;
        write_corpus(dir.join(files::TARGET), &self.target)?;
        write_corpus(dir.join(files::EVAL), &self.eval)?;
        write_gold(dir.join(files::GOLD), &self.gold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            target_docs: 60,
            structured_docs: 10,
            eval_docs: 10,
            kb_triples: 60,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.triples, b.triples);
        let c = generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn sizes_and_kb() {
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(b.target.len(), 300);
        assert_eq!(b.structured.len(), 30);
        assert_eq!(b.triples.len(), 200);
        assert!(!b.gold.is_empty());
        let eval_ids: BTreeSet<&str> = b.eval.iter().map(|d| d.doc_id.as_str()).collect();
        assert!(b.gold.iter().all(|g| eval_ids.contains(g.doc_id.as_str())));
    }

    #[test]
    fn list_values_are_chunked_as_items() {
        let s = render("common side effects include {X} .", "zorvatinib", &["stomach upset", "nausea", "dizziness"]);
        let mut s = s;
        s.complete_annotations().unwrap();
        assert_eq!(s.lists().len(), 1);
        let items: Vec<String> = s.lists()[0].item_spans.iter().map(|sp| s.surface(*sp)).collect();
        assert_eq!(items, vec!["stomach upset", "nausea", "dizziness"]);
    }

    #[test]
    fn value_phrases_chunk_whole() {
        for v in DISEASES.iter().chain(SYMPTOMS) {
            let mut s = render("you may experience {X} .", "d", &[v]);
            s.complete_annotations().unwrap();
            let surfaces: Vec<String> = s.chunks().iter().map(|sp| s.surface(*sp)).collect();
            assert!(surfaces.contains(&v.to_string()), "{v}: {surfaces:?}");
        }
    }

    #[test]
    fn spurious_share_is_exact() {
        let b = generate(&SynthConfig::default()).unwrap();
        let g = b.labeled_sentences.len();
        let s = b.spurious_sentences.len();
        assert_eq!(s, (g as f64 * 0.3 / 0.7).round() as usize);
        assert!(b.labeled_sentences.is_disjoint(&b.spurious_sentences));
    }

    #[test]
    fn generated_values_chunk_whole() {
        let b = generate(&small()).unwrap();
        assert!(b.value_concepts.len() >= 600);
        for v in b.value_concepts.keys() {
            let mut s = render("you may experience {X} .", "d", &[v]);
            s.complete_annotations().unwrap();
            let surfaces: Vec<String> = s.chunks().iter().map(|sp| s.surface(*sp)).collect();
            assert!(surfaces.contains(v), "{v}: {surfaces:?}");
        }
    }
}
