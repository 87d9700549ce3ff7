//! Distantly supervised relation extraction from entity-centric documents.
//!
//! Relation mentions labeled by matching KB triples in a small structured
//! corpus seed a label-propagation walk over a TF-IDF mention–feature graph.
//! The top-ranked mentions per relation train one-vs-rest linear classifiers
//! that extract `(title entity, relation, value)` triples from a target corpus.
//!
//! Numeric code is generic over [`Scalar`] (`f32`, `f64`); metrics are
//! generic over [`MetricValue`], which also covers exact rationals.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod kb;
pub mod mentions;
pub mod normalize;
pub mod pipeline;
pub mod propagation;
pub mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{MetricValue, Scalar};

pub use corpus::{CorpusTag, Document, Sentence, Span, Token};
pub use eval::{Baseline, GoldAnnotation, Prediction};
pub use features::{FeatureConfig, FeatureVector, Mention};
pub use kb::{ConceptSeed, RelationSchema, Triple};
pub use mentions::{LabeledMention, MentionSets, SourceSet};
pub use propagation::{PropagationConfig, VariantSpec};
pub use training::{Strategy, TrainConfig};

pub type Graph = propagation::BipartiteGraph<f64>;
pub type Ranking = propagation::RankedLabeling<f64>;
pub type Model = training::LinearModel<f64>;
pub type Report = eval::EvalReport<f64>;
pub type ExactReport = eval::EvalReport<num_rational::Rational64>;
