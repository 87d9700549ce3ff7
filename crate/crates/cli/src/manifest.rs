//! `manifest.json`: per stage, the configuration hash and the sha256 of every
//! file consumed and produced. Consumers check the chain before reading.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Stage};
use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

/// Artifact file names and the stage producing each.
pub mod artifacts {
    pub const CORPUS_STRUCTURED: &str = "corpus_structured.jsonl";
    pub const CORPUS_TARGET: &str = "corpus_target.jsonl";
    pub const CORPUS_EVAL: &str = "corpus_eval.jsonl";
    pub const MENTION_POOL: &str = "mention_pool.jsonl";
    pub const MENTION_SETS: &str = "mention_sets.jsonl";
    pub const GRAPH: &str = "graph.tsv";
    pub const RANKING: &str = "ranking.tsv";
    pub const MODEL: &str = "model.json";
    pub const DISTILLED: &str = "distilled.tsv";
    pub const CANDIDATES: &str = "candidates.tsv";
    pub const PREDICTIONS: &str = "predictions.tsv";
    pub const REPORT: &str = "report.json";
    pub const PR_CURVE: &str = "pr_curve.csv";
}

fn producer(artifact: &str) -> Option<(Stage, &'static str)> {
    use artifacts::*;
    Some(match artifact {
        CORPUS_STRUCTURED => (Stage::Ingest, "structured corpus"),
        CORPUS_TARGET => (Stage::Ingest, "target corpus"),
        CORPUS_EVAL => (Stage::Ingest, "evaluation corpus"),
        MENTION_POOL => (Stage::Mentions, "mention pool"),
        MENTION_SETS => (Stage::Mentions, "mention sets"),
        GRAPH => (Stage::Propagate, "graph"),
        RANKING => (Stage::Propagate, "ranking"),
        MODEL => (Stage::Train, "model"),
        DISTILLED => (Stage::Train, "distilled positives"),
        CANDIDATES => (Stage::Extract, "candidates"),
        PREDICTIONS => (Stage::Extract, "predictions"),
        REPORT => (Stage::Eval, "report"),
        PR_CURVE => (Stage::Eval, "PR curve"),
        _ => return None,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Raw inputs keyed `paths.<key>`, artifacts keyed by file name.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The output directory of a run together with its manifest.
pub struct Workspace<'a> {
    pub config: &'a RunConfig,
    pub out: PathBuf,
    pub manifest: Manifest,
    hashes: RefCell<BTreeMap<PathBuf, String>>,
}

pub enum Input<'a> {
    Raw(&'static str, &'a Path),
    Artifact(&'static str),
}

impl<'a> Workspace<'a> {
    pub fn open(config: &'a RunConfig, out: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
        let path = out.join(MANIFEST);
        let manifest = if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("{}: corrupt manifest: {e}", path.display())))?
        } else {
            Manifest::default()
        };
        Ok(Workspace {
            config,
            out,
            manifest,
            hashes: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.out.join(artifact)
    }

    fn hash(&self, path: &Path) -> CliResult<String> {
        if let Some(h) = self.hashes.borrow().get(path) {
            return Ok(h.clone());
        }
        let h = sha256_file(path)?;
        self.hashes.borrow_mut().insert(path.to_path_buf(), h.clone());
        Ok(h)
    }

    /// Path of an upstream artifact after checking that it exists, matches
    /// the manifest, and that every stage behind it is current.
    pub fn require(&self, artifact: &str) -> CliResult<PathBuf> {
        let (stage, label) = producer(artifact).expect("known artifact");
        let path = self.path(artifact);
        let recorded = self
            .manifest
            .stages
            .get(stage.name())
            .and_then(|r| r.outputs.get(artifact));
        if recorded.is_none() || !path.is_file() {
            return Err(CliError::Validation(format!(
                "{label} artifact missing: run `relprop {}` first",
                stage.name()
            )));
        }
        self.verify_stage(stage)?;
        Ok(path)
    }

    fn verify_stage(&self, stage: Stage) -> CliResult<()> {
        let name = stage.name();
        let record = self.manifest.stages.get(name).ok_or_else(|| {
            CliError::Validation(format!("no record of `{name}` in the manifest: run `relprop {name}` first"))
        })?;
        if record.config_hash != self.config.stage_hash(stage) {
            return Err(CliError::Validation(format!(
                "config hash mismatch: `{name}` ran with a different configuration; re-run `relprop {name}`"
            )));
        }
        for (artifact, hash) in &record.outputs {
            let path = self.path(artifact);
            if !path.is_file() || self.hash(&path)? != *hash {
                return Err(CliError::Validation(format!(
                    "{artifact} changed since `{name}` wrote it; re-run `relprop {name}`"
                )));
            }
        }
        for (input, hash) in &record.inputs {
            let current = if let Some(key) = input.strip_prefix("paths.") {
                let path = self.raw_input_path(key).ok_or_else(|| {
                    CliError::Validation(format!("`{name}` read {input}, which the configuration no longer sets"))
                })?;
                self.hash(&path).ok()
            } else {
                let (upstream, _) = producer(input).expect("recorded artifact is known");
                self.verify_stage(upstream)?;
                self.manifest
                    .stages
                    .get(upstream.name())
                    .and_then(|r| r.outputs.get(input))
                    .cloned()
            };
            if current.as_deref() != Some(hash.as_str()) {
                return Err(CliError::Validation(format!(
                    "`{name}` is stale: {input} changed since it ran; re-run `relprop {name}`"
                )));
            }
        }
        Ok(())
    }

    fn raw_input_path(&self, key: &str) -> Option<PathBuf> {
        let p = &self.config.paths;
        let rel: &Path = match key {
            "structured_corpus" => &p.structured_corpus,
            "target_corpus" => &p.target_corpus,
            "eval_corpus" => self.config.eval_corpus(),
            "schema" => &p.schema,
            "triples" => &p.triples,
            "concept_seeds" => &p.concept_seeds,
            "gold" => &p.gold,
            "pos_tag_map" => p.pos_tag_map.as_deref()?,
            _ => return None,
        };
        Some(self.config.resolve(rel))
    }

    /// Resolved path of a raw input; the key must be a `paths.` field.
    pub fn raw(&self, key: &'static str) -> PathBuf {
        self.raw_input_path(key).expect("configured input")
    }

    /// Records a finished stage and rewrites the manifest.
    pub fn record(
        &mut self,
        stage: Stage,
        inputs: &[Input<'_>],
        outputs: &[&str],
        params: BTreeMap<String, String>,
    ) -> CliResult<()> {
        let mut record = StageRecord {
            config_hash: self.config.stage_hash(stage),
            params,
            ..Default::default()
        };
        for input in inputs {
            let (key, path) = match input {
                Input::Raw(key, path) => (format!("paths.{key}"), path.to_path_buf()),
                Input::Artifact(name) => ((*name).to_owned(), self.path(name)),
            };
            record.inputs.insert(key, sha256_file(&path)?);
        }
        for name in outputs {
            let path = self.path(name);
            let h = sha256_file(&path)?;
            self.hashes.borrow_mut().insert(path, h.clone());
            record.outputs.insert((*name).to_owned(), h);
        }
        self.manifest.stages.insert(stage.name().to_owned(), record);
        let path = self.out.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
