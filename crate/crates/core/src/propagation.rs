//! Label propagation over the TF-IDF weighted mention–feature graph.
//!
//! Mentions are documents and features are words: `w(m, f) = tf · ln(M / df)`,
//! with `M` the number of mention nodes of the graph being built. The walk is
//! undirected (the adjacency is row-normalized on both sides), and each class
//! gets its own personalized PageRank vector restarting uniformly on its seeds
//! (MultiRankWalk). A mention is assigned the class with the highest score.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Mention;
use crate::mentions::{MentionSets, SourceSet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    /// Restart probability α of the personalized walk.
    pub restart_prob: f64,
    pub max_iters: usize,
    /// Power iteration stops once the L∞ change falls to this value.
    pub tolerance: f64,
    /// Minimum score for a mention reached by concept expansion.
    pub concept_score_floor: f64,
    /// Cap on expanded mentions per concept.
    pub concept_top_k: usize,
    /// Divide each class's scores by its maximum mention score before argmax.
    pub normalize_classes: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            restart_prob: 0.15,
            max_iters: 1000,
            tolerance: 1e-10,
            concept_score_floor: 0.0,
            concept_top_k: 10_000,
            normalize_classes: false,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.restart_prob > 0.0 && self.restart_prob < 1.0) {
            return Err(Error::Config(format!("restart_prob must lie in (0, 1), got {}", self.restart_prob)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        Ok(())
    }
}

/// Which mention sets make up a propagation graph. Always contains `Rs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariantSpec {
    include: BTreeSet<SourceSet>,
}

impl VariantSpec {
    pub fn new(include: impl IntoIterator<Item = SourceSet>) -> Result<Self> {
        let include: BTreeSet<SourceSet> = include.into_iter().collect();
        if !include.contains(&SourceSet::Rs) {
            return Err(Error::Config(format!(
                "graph variant {} does not include Rs, the propagation seeds",
                Self::label(&include)
            )));
        }
        Ok(VariantSpec { include })
    }

    /// The seven legal combinations.
    pub fn all() -> Vec<VariantSpec> {
        use SourceSet::*;
        [
            vec![Rs, Cs, Rt, Ct],
            vec![Rs, Cs, Rt],
            vec![Rs, Cs, Ct],
            vec![Rs, Cs],
            vec![Rs, Rt, Ct],
            vec![Rs, Rt],
            vec![Rs, Ct],
        ]
        .into_iter()
        .map(|v| VariantSpec::new(v).expect("contains Rs"))
        .collect()
    }

    pub fn includes(&self, set: SourceSet) -> bool {
        self.include.contains(&set)
    }

    pub fn sets(&self) -> impl Iterator<Item = SourceSet> + '_ {
        self.include.iter().copied()
    }

    fn label(include: &BTreeSet<SourceSet>) -> String {
        // conventional order: Rs Cs Rt Ct
        [SourceSet::Rs, SourceSet::Cs, SourceSet::Rt, SourceSet::Ct]
            .iter()
            .filter(|s| include.contains(s))
            .map(|s| s.to_string())
            .collect()
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&Self::label(&self.include))
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    /// Parses concatenated set names such as `RsCsRt` (also accepts `+`, `,`
    /// or spaces between names).
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !matches!(c, '+' | ',' | ' ' | '∪')).collect();
        if !compact.len().is_multiple_of(2) || compact.is_empty() {
            return Err(Error::Config(format!("cannot parse graph variant {s:?}")));
        }
        let mut sets = Vec::new();
        for i in (0..compact.len()).step_by(2) {
            sets.push(compact[i..i + 2].parse::<SourceSet>()?);
        }
        VariantSpec::new(sets)
    }
}

impl TryFrom<String> for VariantSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<VariantSpec> for String {
    fn from(v: VariantSpec) -> String {
        v.to_string()
    }
}

/// Mention nodes on one side, feature nodes on the other.
///
/// Node indices used by [`personalized_pagerank`] place mentions first
/// (`0..M`) and features after them (`M..M+F`).
#[derive(Debug, Clone)]
pub struct BipartiteGraph<T> {
    mention_nodes: Vec<String>,
    feature_nodes: Vec<String>,
    mention_adj: Vec<Vec<(usize, T)>>,
    feature_adj: Vec<Vec<(usize, T)>>,
    mention_index: HashMap<String, usize>,
    /// Mentions that lost every edge to idf weighting.
    excluded: BTreeSet<String>,
}

impl<T: Scalar> BipartiteGraph<T> {
    /// TF-IDF graph over the given mentions (deduplicated by mention id).
    pub fn from_mentions<'a, I>(mentions: I) -> Self
    where
        I: IntoIterator<Item = &'a Mention>,
    {
        let mut unique: BTreeMap<&str, &Mention> = BTreeMap::new();
        for m in mentions {
            unique.entry(m.mention_id.as_str()).or_insert(m);
        }
        let total = unique.len();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for m in unique.values() {
            for f in m.features.counts.keys() {
                *df.entry(f.as_str()).or_insert(0) += 1;
            }
        }
        let idf: BTreeMap<&str, T> = df
            .iter()
            .filter(|(_, &d)| d < total)
            .map(|(f, &d)| (*f, (T::of_count(total) / T::of_count(d)).ln()))
            .collect();

        let mut edges = Vec::new();
        let mut excluded = BTreeSet::new();
        for (id, m) in &unique {
            let before = edges.len();
            for (f, &tf) in &m.features.counts {
                if let Some(&w) = idf.get(f.as_str()) {
                    edges.push((id.to_string(), f.clone(), T::of_count(tf as usize) * w));
                }
            }
            if edges.len() == before {
                excluded.insert(id.to_string());
            }
        }
        let mut g = Self::from_weighted_edges(edges).expect("tf-idf weights are positive");
        g.excluded = excluded;
        g
    }

    /// Graph from explicit `(mention, feature, weight)` edges. Weights must be
    /// positive and finite; repeated pairs are summed.
    pub fn from_weighted_edges(edges: impl IntoIterator<Item = (String, String, T)>) -> Result<Self> {
        let mut merged: BTreeMap<(String, String), T> = BTreeMap::new();
        for (m, f, w) in edges {
            if !(w > T::zero() && w.is_finite()) {
                return Err(Error::Graph(format!("edge {m} -- {f} has non-positive weight {w}")));
            }
            let e = merged.entry((m, f)).or_insert_with(T::zero);
            *e = *e + w;
        }
        let mention_nodes: Vec<String> = merged
            .keys()
            .map(|(m, _)| m.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let feature_nodes: Vec<String> = merged
            .keys()
            .map(|(_, f)| f.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mention_index: HashMap<String, usize> =
            mention_nodes.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let feature_index: HashMap<&str, usize> =
            feature_nodes.iter().enumerate().map(|(i, f)| (f.as_str(), i)).collect();
        let mut mention_adj = vec![Vec::new(); mention_nodes.len()];
        let mut feature_adj = vec![Vec::new(); feature_nodes.len()];
        for ((m, f), w) in &merged {
            let (mi, fi) = (mention_index[m], feature_index[f.as_str()]);
            mention_adj[mi].push((fi, *w));
            feature_adj[fi].push((mi, *w));
        }
        Ok(BipartiteGraph {
            mention_nodes,
            feature_nodes,
            mention_adj,
            feature_adj,
            mention_index,
            excluded: BTreeSet::new(),
        })
    }

    pub fn mention_count(&self) -> usize {
        self.mention_nodes.len()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_nodes.len()
    }

    pub fn node_count(&self) -> usize {
        self.mention_count() + self.feature_count()
    }

    pub fn edge_count(&self) -> usize {
        self.mention_adj.iter().map(Vec::len).sum()
    }

    pub fn mentions(&self) -> &[String] {
        &self.mention_nodes
    }

    pub fn features(&self) -> &[String] {
        &self.feature_nodes
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn mention_idx(&self, id: &str) -> Option<usize> {
        self.mention_index.get(id).copied()
    }

    pub fn weight(&self, mention: &str, feature: &str) -> Option<T> {
        let mi = self.mention_idx(mention)?;
        let fi = self.feature_nodes.binary_search_by(|f| f.as_str().cmp(feature)).ok()?;
        self.mention_adj[mi].iter().find(|(f, _)| *f == fi).map(|(_, w)| *w)
    }

    /// `(mention, feature, weight)` for every edge, in node order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, T)> + '_ {
        self.mention_adj.iter().enumerate().flat_map(move |(mi, row)| {
            row.iter()
                .map(move |(fi, w)| (self.mention_nodes[mi].as_str(), self.feature_nodes[*fi].as_str(), *w))
        })
    }

    /// Dense row-stochastic transition matrix over all nodes (mentions first).
    /// Meant for tests and small graphs.
    pub fn dense_transition(&self) -> Vec<Vec<T>> {
        let m = self.mention_count();
        let n = self.node_count();
        let mut t = vec![vec![T::zero(); n]; n];
        for (mi, row) in self.mention_adj.iter().enumerate() {
            let deg: T = row.iter().map(|(_, w)| *w).sum();
            for (fi, w) in row {
                t[mi][m + fi] = *w / deg;
            }
        }
        for (fi, row) in self.feature_adj.iter().enumerate() {
            let deg: T = row.iter().map(|(_, w)| *w).sum();
            for (mi, w) in row {
                t[m + fi][*mi] = *w / deg;
            }
        }
        t
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (m, f, w) in self.edges() {
            writeln!(out, "{m}\t{f}\t{w}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Graph over the union of the sets selected by `variant`.
pub fn build_graph<T: Scalar>(sets: &MentionSets, variant: &VariantSpec) -> Result<BipartiteGraph<T>> {
    if !variant.includes(SourceSet::Rs) {
        return Err(Error::Config(format!("graph variant {variant} does not include Rs")));
    }
    if sets.rs.is_empty() {
        return Err(Error::Graph("Rs is empty; nothing to propagate from".into()));
    }
    let mentions = variant.sets().flat_map(|s| sets.get(s).iter().map(|lm| &lm.mention));
    Ok(BipartiteGraph::from_mentions(mentions))
}

#[derive(Debug, Clone)]
pub struct PprScores<T> {
    /// One score per node, mentions first.
    pub values: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    mention_count: usize,
}

impl<T: Scalar> PprScores<T> {
    pub fn mention_scores(&self) -> &[T] {
        &self.values[..self.mention_count]
    }

    pub fn feature_scores(&self) -> &[T] {
        &self.values[self.mention_count..]
    }
}

/// Power iteration for `p = α·s + (1 − α)·Tᵀp`, starting from `p₀ = s`,
/// where `s` is uniform over `seeds`.
pub fn personalized_pagerank<T: Scalar>(
    graph: &BipartiteGraph<T>,
    seeds: &BTreeSet<String>,
    config: &PropagationConfig,
) -> Result<PprScores<T>> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::Graph("empty seed set".into()));
    }
    let m = graph.mention_count();
    let n = graph.node_count();
    let mut restart = vec![T::zero(); n];
    let share = T::one() / T::of_count(seeds.len());
    for s in seeds {
        match graph.mention_idx(s) {
            Some(i) => restart[i] = share,
            None if graph.excluded.contains(s) => return Err(Error::IsolatedSeed(s.clone())),
            None => return Err(Error::SeedNotInGraph(s.clone())),
        }
    }

    let alpha = T::lit(config.restart_prob);
    let walk = T::one() - alpha;
    let tol = T::lit(config.tolerance);
    let mention_deg: Vec<T> = graph.mention_adj.iter().map(|r| r.iter().map(|(_, w)| *w).sum()).collect();
    let feature_deg: Vec<T> = graph.feature_adj.iter().map(|r| r.iter().map(|(_, w)| *w).sum()).collect();

    let mut p = restart.clone();
    let mut next = vec![T::zero(); n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        for (x, r) in next.iter_mut().zip(&restart) {
            *x = alpha * *r;
        }
        for (mi, row) in graph.mention_adj.iter().enumerate() {
            let out = walk * p[mi] / mention_deg[mi];
            for (fi, w) in row {
                next[m + fi] = next[m + fi] + out * *w;
            }
        }
        for (fi, row) in graph.feature_adj.iter().enumerate() {
            let out = walk * p[m + fi] / feature_deg[fi];
            for (mi, w) in row {
                next[*mi] = next[*mi] + out * *w;
            }
        }
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max);
        std::mem::swap(&mut p, &mut next);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    Ok(PprScores {
        values: p,
        iterations,
        converged,
        mention_count: m,
    })
}

/// Per-class rankings produced by MultiRankWalk.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedLabeling<T> {
    /// Class → `(mention_id, score)` for mentions assigned to that class,
    /// by descending score then mention id.
    pub rankings: BTreeMap<String, Vec<(String, T)>>,
    /// Mention → assigned class. Mentions no seed reaches are absent.
    pub assignments: BTreeMap<String, String>,
}

impl<T: Scalar> RankedLabeling<T> {
    pub fn ranking(&self, class: &str) -> &[(String, T)] {
        self.rankings.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        for (class, ranking) in &self.rankings {
            for (rank, (id, score)) in ranking.iter().enumerate() {
                writeln!(out, "{class}\t{}\t{id}\t{score}", rank + 1).map_err(|e| Error::io(path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

impl RankedLabeling<f64> {
    /// Reads the `relation<TAB>rank<TAB>mention_id<TAB>score` format.
    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rankings: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        let mut assignments = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let cols: Vec<&str> = line.split('\t').collect();
            let [class, rank, id, score] = cols[..] else {
                return Err(Error::parse(&name, i + 1, "expected 4 tab-separated fields"));
            };
            let rank: usize = rank.parse().map_err(|_| Error::parse(&name, i + 1, "bad rank"))?;
            let score: f64 = score.parse().map_err(|_| Error::parse(&name, i + 1, "bad score"))?;
            let list = rankings.entry(class.to_owned()).or_default();
            if rank != list.len() + 1 {
                return Err(Error::parse(&name, i + 1, format!("rank {rank} out of sequence")));
            }
            list.push((id.to_owned(), score));
            assignments.insert(id.to_owned(), class.to_owned());
        }
        Ok(RankedLabeling { rankings, assignments })
    }
}

/// One personalized PageRank per class; each mention goes to its best class.
///
/// Score ties between classes go to the lexicographically first class.
pub fn multirankwalk<T: Scalar>(
    graph: &BipartiteGraph<T>,
    seeds_by_class: &BTreeMap<String, BTreeSet<String>>,
    config: &PropagationConfig,
) -> Result<RankedLabeling<T>> {
    for (class, seeds) in seeds_by_class {
        if seeds.is_empty() {
            return Err(Error::Graph(format!("class {class:?} has no seeds")));
        }
    }
    let classes: Vec<&String> = seeds_by_class.keys().collect();
    let per_class: Vec<Vec<T>> = classes
        .par_iter()
        .map(|c| {
            personalized_pagerank(graph, &seeds_by_class[*c], config).map(|s| {
                let mut v = s.mention_scores().to_vec();
                if config.normalize_classes {
                    let max = v.iter().copied().fold(T::zero(), T::max);
                    if max > T::zero() {
                        v.iter_mut().for_each(|x| *x = *x / max);
                    }
                }
                v
            })
        })
        .collect::<Result<_>>()?;

    let mut rankings: BTreeMap<String, Vec<(String, T)>> =
        classes.iter().map(|c| ((*c).clone(), Vec::new())).collect();
    let mut assignments = BTreeMap::new();
    for (mi, id) in graph.mentions().iter().enumerate() {
        let mut best: Option<(usize, T)> = None;
        for (ci, scores) in per_class.iter().enumerate() {
            let s = scores[mi];
            if s > T::zero() && best.is_none_or(|(_, b)| s > b) {
                best = Some((ci, s));
            }
        }
        if let Some((ci, s)) = best {
            rankings.get_mut(classes[ci]).expect("class").push((id.clone(), s));
            assignments.insert(id.clone(), classes[ci].clone());
        }
    }
    for list in rankings.values_mut() {
        list.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite scores").then_with(|| a.0.cmp(&b.0)));
    }
    Ok(RankedLabeling { rankings, assignments })
}
