//! Sweeps the synthetic benchmark over restart probability, class
//! normalization, graph variant, strategy and N, averaging micro F1 over
//! seeds, and writes the table as CSV next to the three baselines.
//!
//! `cargo run --release -p relprop-core --example benchmark -- [out.csv] [seeds]`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use relprop::eval::Baseline;
use relprop::pipeline::{baseline_model, score_model, train_from_ranking, Prepared};
use relprop::synth::{generate, SynthConfig};
use relprop::{FeatureConfig, MetricValue, PropagationConfig, Strategy, TrainConfig, VariantSpec};

const ALPHAS: [f64; 3] = [0.15, 0.3, 0.5];
const NS: [usize; 6] = [25, 50, 75, 100, 150, 200];

type Key = (String, String, String, String, usize);

fn main() -> relprop::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "benchmarks/sweep.csv".into());
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let features = FeatureConfig::default();
    let mut sums: BTreeMap<Key, (f64, u64)> = BTreeMap::new();
    let mut add = |key: Key, f1: f64| {
        let e = sums.entry(key).or_insert((0.0, 0));
        e.0 += f1;
        e.1 += 1;
    };
    for seed in 0..seeds {
        let start = Instant::now();
        let bench = generate(&SynthConfig {
            seed,
            ..Default::default()
        })?;
        let train = TrainConfig {
            rng_seed: seed,
            ..Default::default()
        };
        let base = PropagationConfig::default();
        let prepared = Prepared::new(
            &bench.structured,
            &bench.target,
            &bench.schema,
            &bench.triples,
            &bench.concept_seeds,
            &base,
            &features,
        )?;
        let pool = prepared.pool();
        for kind in [Baseline::DsStruct, Baseline::DsTarget, Baseline::DsBoth] {
            let model = baseline_model(kind, &prepared, &pool, &bench.schema, &train, &features)?;
            let (_, report) = score_model(&model, &bench.eval, &bench.gold, &features)?;
            add(
                ("-".into(), "-".into(), kind.to_string(), "-".into(), train.n),
                report.micro.f1.as_f64(),
            );
        }
        for alpha in ALPHAS {
            for normalize in [false, true] {
                let propagation = PropagationConfig {
                    restart_prob: alpha,
                    normalize_classes: normalize,
                    ..base
                };
                for variant in VariantSpec::all() {
                    let ranking = prepared.rank(&variant, &propagation)?;
                    for strategy in [Strategy::Both, Strategy::Target] {
                        for n in NS {
                            let cfg = TrainConfig { n, strategy, ..train };
                            // a strategy can leave a relation without positives
                            let Ok((_, model)) = train_from_ranking(&prepared, &ranking, &pool, &cfg, &features) else {
                                continue;
                            };
                            let (_, report) = score_model(&model, &bench.eval, &bench.gold, &features)?;
                            add(
                                (
                                    alpha.to_string(),
                                    normalize.to_string(),
                                    variant.to_string(),
                                    format!("{strategy:?}"),
                                    n,
                                ),
                                report.micro.f1.as_f64(),
                            );
                        }
                    }
                }
            }
        }
        eprintln!("seed {seed} done in {:.1}s", start.elapsed().as_secs_f64());
    }

    let mut csv = String::from("restart_prob,normalize_classes,model,strategy,n,mean_f1\n");
    let mut best: Option<(f64, &Key)> = None;
    for (key, (sum, count)) in &sums {
        if *count != seeds {
            continue;
        }
        let mean = sum / *count as f64;
        let (alpha, norm, model, strategy, n) = key;
        writeln!(csv, "{alpha},{norm},{model},{strategy},{n},{mean:.6}").expect("string write");
        if strategy == "Both" && best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, key));
        }
    }
    std::fs::write(&out, csv).map_err(|source| relprop::Error::Io { path: out.clone().into(), source })?;
    if let Some((mean, key)) = best {
        println!("best Both configuration: {key:?} mean F1 {mean:.6}");
    }
    Ok(())
}
