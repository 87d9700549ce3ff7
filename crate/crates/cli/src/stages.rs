use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use relprop::corpus::{ingest_corpus, ingest_corpus_with, write_corpus, TagMap};
use relprop::eval::{
    evaluate_candidates, extract_corpus, load_gold, pr_curve, read_predictions, run_baseline, write_pr_curve,
    write_predictions, EvalReport,
};
use relprop::kb::{load_concept_seeds_with, load_schema, load_triples_with};
use relprop::pipeline::{score_model, train_from_ranking, Prepared};
use relprop::propagation::{build_graph, multirankwalk, RankedLabeling};
use relprop::training::LinearModel;
use relprop::{Baseline, CorpusTag, Document, Mention, MentionSets, MetricValue, Strategy, TrainConfig};

use crate::config::Stage;
use crate::error::{CliError, CliResult};
use crate::manifest::{artifacts::*, Input, Workspace};

fn no_params() -> BTreeMap<String, String> {
    BTreeMap::new()
}

pub fn ingest(ws: &mut Workspace<'_>) -> CliResult<()> {
    let config = ws.config;
    config.check_inputs()?;
    let tags = match &config.paths.pos_tag_map {
        Some(p) => TagMap::load(config.resolve(p))?,
        None => TagMap::default(),
    };
    let structured_path = ws.raw("structured_corpus");
    let target_path = ws.raw("target_corpus");
    let eval_path = ws.raw("eval_corpus");
    let mut structured = ingest_corpus_with(&structured_path, CorpusTag::Structured, &tags)?;
    let mut target = ingest_corpus_with(&target_path, CorpusTag::Target, &tags)?;
    let mut eval = ingest_corpus_with(&eval_path, CorpusTag::Target, &tags)?;
    for doc in structured.iter_mut().chain(&mut target).chain(&mut eval) {
        doc.complete_annotations()?;
    }
    write_corpus(ws.path(CORPUS_STRUCTURED), &structured)?;
    write_corpus(ws.path(CORPUS_TARGET), &target)?;
    write_corpus(ws.path(CORPUS_EVAL), &eval)?;
    info!(
        "ingested {} structured, {} target and {} evaluation documents",
        structured.len(),
        target.len(),
        eval.len()
    );
    let tag_map = config.paths.pos_tag_map.as_ref().map(|_| ws.raw("pos_tag_map"));
    let mut inputs = vec![
        Input::Raw("structured_corpus", &structured_path),
        Input::Raw("target_corpus", &target_path),
        Input::Raw("eval_corpus", &eval_path),
    ];
    if let Some(t) = &tag_map {
        inputs.push(Input::Raw("pos_tag_map", t));
    }
    ws.record(
        Stage::Ingest,
        &inputs,
        &[CORPUS_STRUCTURED, CORPUS_TARGET, CORPUS_EVAL],
        no_params(),
    )
}

pub fn mentions(ws: &mut Workspace<'_>) -> CliResult<()> {
    let config = ws.config;
    let structured = ingest_corpus(ws.require(CORPUS_STRUCTURED)?, CorpusTag::Structured)?;
    let target = ingest_corpus(ws.require(CORPUS_TARGET)?, CorpusTag::Target)?;
    let (schema_path, triples_path, seeds_path) = (ws.raw("schema"), ws.raw("triples"), ws.raw("concept_seeds"));
    let schema = load_schema(&schema_path)?;
    let triples = load_triples_with(&triples_path, &schema, config.kb.filter())?;
    let seeds = load_concept_seeds_with(&seeds_path, &schema, config.kb.filter())?;
    let prepared = Prepared::new(
        &structured,
        &target,
        &schema,
        &triples,
        &seeds,
        &config.propagation,
        &config.features,
    )?;
    write_mentions(&ws.path(MENTION_POOL), &prepared.pool())?;
    prepared.sets.write_jsonl(ws.path(MENTION_SETS))?;
    let s = &prepared.sets;
    info!(
        "mention sets: Rs={} Rt={} Cs={} Ct={}",
        s.rs.len(),
        s.rt.len(),
        s.cs.len(),
        s.ct.len()
    );
    ws.record(
        Stage::Mentions,
        &[
            Input::Artifact(CORPUS_STRUCTURED),
            Input::Artifact(CORPUS_TARGET),
            Input::Raw("schema", &schema_path),
            Input::Raw("triples", &triples_path),
            Input::Raw("concept_seeds", &seeds_path),
        ],
        &[MENTION_POOL, MENTION_SETS],
        no_params(),
    )
}

pub fn propagate(ws: &mut Workspace<'_>) -> CliResult<()> {
    let config = ws.config;
    let sets = MentionSets::read_jsonl(ws.require(MENTION_SETS)?)?;
    let graph = build_graph::<f64>(&sets, &config.variant)?;
    graph.write_tsv(ws.path(GRAPH))?;
    let ranking = multirankwalk(&graph, &sets.seeds_by_relation(), &config.propagation)?;
    ranking.write_tsv(ws.path(RANKING))?;
    info!(
        "graph {}: {} mentions, {} features, {} edges",
        config.variant,
        graph.mention_count(),
        graph.feature_count(),
        graph.edge_count()
    );
    ws.record(
        Stage::Propagate,
        &[Input::Artifact(MENTION_SETS)],
        &[GRAPH, RANKING],
        [("variant".to_owned(), config.variant.to_string())].into(),
    )
}

pub fn train(ws: &mut Workspace<'_>, baseline: Option<Baseline>) -> CliResult<()> {
    let config = ws.config;
    // the ranking is checked first so a skipped propagation step is reported as such
    let ranking_path = match baseline {
        None => Some(ws.require(RANKING)?),
        Some(_) => None,
    };
    let sets_path = ws.require(MENTION_SETS)?;
    let pool_path = ws.require(MENTION_POOL)?;
    let sets = MentionSets::read_jsonl(&sets_path)?;
    let pool = read_mentions(&pool_path)?;
    let mut inputs = vec![Input::Artifact(MENTION_SETS), Input::Artifact(MENTION_POOL)];
    let schema_path = ws.raw("schema");
    let (model, outputs, kind) = match (baseline, ranking_path) {
        (Some(kind), _) => {
            let schema = load_schema(&schema_path)?;
            let model = run_baseline::<f64>(kind, &sets, &pool, &schema, &config.training, &config.features)?;
            inputs.push(Input::Raw("schema", &schema_path));
            (model, vec![MODEL], kind.to_string())
        }
        (None, Some(ranking_path)) => {
            let ranking = RankedLabeling::read_tsv(&ranking_path)?;
            let (structured, target) = pool.iter().cloned().partition(|m| m.corpus == CorpusTag::Structured);
            let prepared = Prepared {
                structured,
                target,
                sets,
            };
            let (distilled, model) =
                train_from_ranking(&prepared, &ranking, &pool, &config.training, &config.features)?;
            let mut text = String::new();
            for (relation, ids) in &distilled.positives {
                for (rank, id) in ids.iter().enumerate() {
                    writeln!(text, "{relation}\t{}\t{id}", rank + 1).expect("string write");
                }
            }
            let path = ws.path(DISTILLED);
            std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            inputs.push(Input::Artifact(RANKING));
            (model, vec![MODEL, DISTILLED], "propagation".to_owned())
        }
        (None, None) => unreachable!("ranking required without a baseline"),
    };
    model.save(ws.path(MODEL))?;
    info!("trained {} classifiers ({kind})", model.classifiers.len());
    ws.record(Stage::Train, &inputs, &outputs, [("model".to_owned(), kind)].into())
}

pub fn extract(ws: &mut Workspace<'_>) -> CliResult<()> {
    let config = ws.config;
    let model = LinearModel::<f64>::load(ws.require(MODEL)?)?;
    let docs = ingest_corpus(ws.require(CORPUS_EVAL)?, CorpusTag::Target)?;
    let candidates = extract_corpus(&docs, &model, &config.features)?;
    let threshold = model.header.train_config.threshold;
    let kept: Vec<_> = candidates.iter().filter(|p| p.score >= threshold).cloned().collect();
    write_predictions(ws.path(CANDIDATES), &candidates)?;
    write_predictions(ws.path(PREDICTIONS), &kept)?;
    info!(
        "{} candidates, {} predictions at threshold {threshold}",
        candidates.len(),
        kept.len()
    );
    ws.record(
        Stage::Extract,
        &[Input::Artifact(MODEL), Input::Artifact(CORPUS_EVAL)],
        &[CANDIDATES, PREDICTIONS],
        no_params(),
    )
}

pub fn eval(ws: &mut Workspace<'_>) -> CliResult<EvalReport<f64>> {
    let candidates = read_predictions(ws.require(CANDIDATES)?)?;
    let model = LinearModel::<f64>::load(ws.require(MODEL)?)?;
    let docs = ingest_corpus(ws.require(CORPUS_EVAL)?, CorpusTag::Target)?;
    let (schema_path, gold_path) = (ws.raw("schema"), ws.raw("gold"));
    let schema = load_schema(&schema_path)?;
    let gold = load_gold(&gold_path, &schema)?;
    let known = doc_ids(&docs);
    let report: EvalReport<f64> =
        evaluate_candidates(&candidates, model.header.train_config.threshold, &gold, &known)?;
    let path = ws.path(REPORT);
    let mut json = serde_json::to_string_pretty(&report).map_err(relprop::Error::from)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    write_pr_curve(ws.path(PR_CURVE), &pr_curve(&candidates, &gold))?;
    ws.record(
        Stage::Eval,
        &[
            Input::Artifact(CANDIDATES),
            Input::Artifact(MODEL),
            Input::Artifact(CORPUS_EVAL),
            Input::Raw("schema", &schema_path),
            Input::Raw("gold", &gold_path),
        ],
        &[REPORT, PR_CURVE],
        no_params(),
    )?;
    Ok(report)
}

/// Name of the CSV a sweep writes for one variant.
pub fn sweep_file(variant: &relprop::VariantSpec) -> String {
    format!("sweep_{variant}.csv")
}

pub fn sweep(ws: &mut Workspace<'_>) -> CliResult<Vec<String>> {
    let config = ws.config;
    let sets = MentionSets::read_jsonl(ws.require(MENTION_SETS)?)?;
    let pool = read_mentions(&ws.require(MENTION_POOL)?)?;
    let docs = ingest_corpus(ws.require(CORPUS_EVAL)?, CorpusTag::Target)?;
    let (schema_path, gold_path) = (ws.raw("schema"), ws.raw("gold"));
    let schema = load_schema(&schema_path)?;
    let gold = load_gold(&gold_path, &schema)?;
    let (structured, target) = pool.iter().cloned().partition(|m| m.corpus == CorpusTag::Structured);
    let prepared = Prepared {
        structured,
        target,
        sets,
    };
    let mut outputs = Vec::new();
    for variant in config.sweep_variants() {
        let ranking = prepared.rank(&variant, &config.propagation)?;
        let mut csv = String::from("strategy,n,precision,recall,f1\n");
        for strategy in [Strategy::Both, Strategy::Target] {
            for &n in &config.sweep.n {
                let train = TrainConfig {
                    n,
                    strategy,
                    ..config.training
                };
                match train_from_ranking(&prepared, &ranking, &pool, &train, &config.features) {
                    Ok((_, model)) => {
                        let (_, report) = score_model(&model, &docs, &gold, &config.features)?;
                        let m = &report.micro;
                        writeln!(
                            csv,
                            "{strategy:?},{n},{},{},{}",
                            m.precision.as_f64(),
                            m.recall.as_f64(),
                            m.f1.as_f64()
                        )
                        .expect("string write");
                    }
                    // e.g. the Target strategy on a graph without target mentions
                    Err(e @ relprop::Error::Training(_)) => {
                        warn!("{variant} {strategy:?} N={n}: {e}");
                        writeln!(csv, "{strategy:?},{n},,,").expect("string write");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let name = sweep_file(&variant);
        let path = ws.path(&name);
        std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
        outputs.push(name);
    }
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ws.record(
        Stage::Sweep,
        &[
            Input::Artifact(MENTION_SETS),
            Input::Artifact(MENTION_POOL),
            Input::Artifact(CORPUS_EVAL),
            Input::Raw("schema", &schema_path),
            Input::Raw("gold", &gold_path),
        ],
        &names,
        no_params(),
    )?;
    Ok(outputs)
}

fn doc_ids(docs: &[Document]) -> BTreeSet<String> {
    docs.iter().map(|d| d.doc_id.clone()).collect()
}

fn write_mentions(path: &Path, mentions: &[Mention]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for m in mentions {
        serde_json::to_writer(&mut out, m).map_err(relprop::Error::from)?;
        out.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

fn read_mentions(path: &Path) -> CliResult<Vec<Mention>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let m: Mention = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("{}, line {}: {e}", path.display(), i + 1)))?;
        out.push(m);
    }
    Ok(out)
}
