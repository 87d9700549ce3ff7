//! `relprop`: staged pipeline driver. Each subcommand reads the artifacts of
//! the previous one from the output directory and records its own in
//! `manifest.json`.

mod config;
mod error;
mod manifest;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relprop::synth::{generate, SynthConfig};
use relprop::{Baseline, MetricValue};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Workspace;

#[derive(Debug, Parser)]
#[command(name = "relprop", version, about = "Distantly supervised relation extraction with label propagation")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for negative sampling and training; overrides `training.rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and normalize the input corpora.
    Ingest,
    /// Extract mentions and build the Rs, Rt, Cs and Ct sets.
    Mentions,
    /// Build the mention-feature graph and rank mentions per relation.
    Propagate,
    /// Distill positives from the ranking and train the classifiers.
    Train {
        /// Train a distant-supervision baseline instead (DS_Struct, DS_Target, DS_Both).
        #[arg(long)]
        baseline: Option<Baseline>,
    },
    /// Score every mention of the evaluation corpus.
    Extract,
    /// Compare predictions against the gold annotations.
    Eval,
    /// Retrain and evaluate across N values and both strategies.
    Sweep,
    /// Run ingest through eval.
    Run {
        #[arg(long)]
        baseline: Option<Baseline>,
    },
    /// Write a synthetic benchmark and a matching run configuration.
    Synth {
        /// Small corpora for quick runs and tests.
        #[arg(long)]
        small: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::Synth { small } = cli.command {
        let out = cli.out.ok_or_else(|| CliError::Validation("synth needs --out <dir>".into()))?;
        return synth(out, cli.seed.unwrap_or(0), small);
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Validation("--config <path> is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        config.training.rng_seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| config.resolve(&config.output_dir));
    let mut ws = Workspace::open(&config, out)?;
    match cli.command {
        Command::Ingest => stages::ingest(&mut ws),
        Command::Mentions => stages::mentions(&mut ws),
        Command::Propagate => stages::propagate(&mut ws),
        Command::Train { baseline } => stages::train(&mut ws, baseline),
        Command::Extract => stages::extract(&mut ws),
        Command::Eval => stages::eval(&mut ws).map(print_report),
        Command::Sweep => stages::sweep(&mut ws).map(|files| {
            for f in files {
                println!("{}", ws.path(&f).display());
            }
        }),
        Command::Run { baseline } => {
            stages::ingest(&mut ws)?;
            stages::mentions(&mut ws)?;
            if baseline.is_none() {
                stages::propagate(&mut ws)?;
            }
            stages::train(&mut ws, baseline)?;
            stages::extract(&mut ws)?;
            stages::eval(&mut ws).map(print_report)
        }
        Command::Synth { .. } => unreachable!("handled above"),
    }
}

fn print_report(report: relprop::Report) {
    let m = &report.micro;
    println!(
        "micro  P={:.4} R={:.4} F1={:.4} ({} of {} predictions correct, {} gold)",
        m.precision.as_f64(),
        m.recall.as_f64(),
        m.f1.as_f64(),
        m.true_positives,
        m.predicted,
        m.gold
    );
    for (relation, prf) in &report.per_relation {
        println!(
            "  {relation}: P={:.4} R={:.4} F1={:.4}",
            prf.precision.as_f64(),
            prf.recall.as_f64(),
            prf.f1.as_f64()
        );
    }
    if let Some(r) = &report.ranking {
        println!("ranking  MRR={:.4} MAP={:.4} recall={:.4} over {} queries", r.mrr, r.map, r.recall, r.queries);
    }
}

fn synth(out: PathBuf, seed: u64, small: bool) -> CliResult<()> {
    let base = if small {
        SynthConfig {
            target_docs: 60,
            structured_docs: 12,
            eval_docs: 10,
            kb_triples: 60,
            ..Default::default()
        }
    } else {
        SynthConfig::default()
    };
    let bench = generate(&SynthConfig { seed, ..base })?;
    bench.write_to_dir(&out)?;
    use relprop::synth::files;
    let toml = format!(
        "variant = \"RsCsRt\"\noutput_dir = \"out\"\n\n[paths]\nstructured_corpus = \"{}\"\ntarget_corpus = \"{}\"\neval_corpus = \"{}\"\nschema = \"{}\"\ntriples = \"{}\"\nconcept_seeds = \"{}\"\ngold = \"{}\"\n\n[training]\nn = {}\nrng_seed = {seed}\n",
        files::STRUCTURED,
        files::TARGET,
        files::EVAL,
        files::SCHEMA,
        files::TRIPLES,
        files::CONCEPT_SEEDS,
        files::GOLD,
        if small { 25 } else { 100 },
    );
    let path = out.join("run.toml");
    std::fs::write(&path, toml).map_err(|e| CliError::io(&path, e))?;
    println!("{}", path.display());
    Ok(())
}
