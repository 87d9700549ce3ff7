//! Run configuration read from TOML. Relative paths resolve against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use relprop::kb::SeedFilter;
use relprop::training::TrainConfig;
use relprop::{FeatureConfig, PropagationConfig, VariantSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub structured_corpus: PathBuf,
    pub target_corpus: PathBuf,
    /// Documents to extract from and evaluate on; defaults to the target corpus.
    #[serde(default)]
    pub eval_corpus: Option<PathBuf>,
    pub schema: PathBuf,
    pub triples: PathBuf,
    pub concept_seeds: PathBuf,
    pub gold: PathBuf,
    /// JSON POS-tag mapping layered over the built-in one.
    #[serde(default)]
    pub pos_tag_map: Option<PathBuf>,
}

/// Noise filter for KB values.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KbConfig {
    /// Longest accepted value in characters; 0 disables the check.
    pub max_value_len: usize,
    pub reject_commas: bool,
}

impl Default for KbConfig {
    fn default() -> Self {
        KbConfig {
            max_value_len: 60,
            reject_commas: true,
        }
    }
}

impl KbConfig {
    pub fn filter(&self) -> SeedFilter {
        SeedFilter {
            max_len: (self.max_value_len > 0).then_some(self.max_value_len),
            reject_commas: self.reject_commas,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    /// Graph variants to sweep; empty means the configured variant.
    pub variants: Vec<VariantSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n: vec![25, 50, 100, 200],
            variants: Vec::new(),
        }
    }
}

fn default_variant() -> VariantSpec {
    "RsCsRtCt".parse().expect("valid variant")
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    #[serde(default = "default_variant")]
    pub variant: VariantSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub kb: KbConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Directory of the configuration file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
        config.propagation.validate()?;
        config.training.validate()?;
        if config.sweep.n.contains(&0) {
            return Err(CliError::Validation("sweep.n values must be positive".into()));
        }
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn eval_corpus(&self) -> &Path {
        self.paths.eval_corpus.as_deref().unwrap_or(&self.paths.target_corpus)
    }

    pub fn sweep_variants(&self) -> Vec<VariantSpec> {
        if self.sweep.variants.is_empty() {
            vec![self.variant.clone()]
        } else {
            self.sweep.variants.clone()
        }
    }

    /// Checks that every referenced input file exists.
    pub fn check_inputs(&self) -> CliResult<()> {
        let p = &self.paths;
        let mut required = vec![
            ("structured_corpus", &p.structured_corpus),
            ("target_corpus", &p.target_corpus),
            ("schema", &p.schema),
            ("triples", &p.triples),
            ("concept_seeds", &p.concept_seeds),
            ("gold", &p.gold),
        ];
        if let Some(e) = &p.eval_corpus {
            required.push(("eval_corpus", e));
        }
        if let Some(t) = &p.pos_tag_map {
            required.push(("pos_tag_map", t));
        }
        for (key, path) in required {
            let full = self.resolve(path);
            if !full.is_file() {
                return Err(CliError::Validation(format!(
                    "paths.{key}: {} does not exist",
                    full.display()
                )));
            }
        }
        Ok(())
    }

    /// Hash of the configuration a stage depends on.
    pub fn stage_hash(&self, stage: Stage) -> String {
        let slice = match stage {
            Stage::Ingest => serde_json::json!({
                "paths": [&self.paths.structured_corpus, &self.paths.target_corpus, self.eval_corpus(), &self.paths.pos_tag_map],
            }),
            Stage::Mentions => serde_json::json!({
                "paths": [&self.paths.schema, &self.paths.triples, &self.paths.concept_seeds],
                "kb": self.kb,
                "features": self.features,
                "propagation": self.propagation,
            }),
            Stage::Propagate => serde_json::json!({
                "variant": self.variant,
                "propagation": self.propagation,
            }),
            Stage::Train => serde_json::json!({ "training": self.training, "features": self.features }),
            Stage::Extract => serde_json::json!({ "features": self.features }),
            Stage::Eval => serde_json::json!({ "gold": &self.paths.gold }),
            Stage::Sweep => serde_json::json!({
                "sweep": self.sweep,
                "variants": self.sweep_variants(),
                "propagation": self.propagation,
                "training": self.training,
                "features": self.features,
                "gold": &self.paths.gold,
            }),
        };
        hex::encode(Sha256::digest(slice.to_string().as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Mentions,
    Propagate,
    Train,
    Extract,
    Eval,
    Sweep,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Mentions => "mentions",
            Stage::Propagate => "propagate",
            Stage::Train => "train",
            Stage::Extract => "extract",
            Stage::Eval => "eval",
            Stage::Sweep => "sweep",
        }
    }
}
