use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tkgx::checkpoint::Checkpoint;
use tkgx::config::Config;
use tkgx::engine::{Forecaster, Query};
use tkgx::eval::{evaluate, filter_registry, FactIndex};
use tkgx::explain::{exporter_registry, verify_graph, ExplanationDocument};
use tkgx::params::{ModelDims, ParameterSet};
use tkgx::store::{EntityId, SplitData};
use tkgx::trainer::{fit, TrainingData};
use tkgx::Error;

#[derive(Parser)]
#[command(name = "tkgx", version, about = "Explainable link forecasting on temporal knowledge graphs")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling and training; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset directory and report its statistics.
    Ingest {
        /// Directory with train.txt, valid.txt and test.txt.
        #[arg(long)]
        data: PathBuf,
        /// Write entities.tsv and predicates.tsv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model and write the best-on-validation checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Validate on at most this many (reciprocal-augmented) queries.
        #[arg(long)]
        valid_limit: Option<usize>,
    },
    /// Rank the answers of a split and report MRR / Hits@k.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "time-aware")]
        filter: String,
        #[arg(long, default_value = "1,3,10", value_delimiter = ',')]
        ks: Vec<usize>,
        #[arg(long, default_value = "test")]
        split: String,
        /// Per-query ranks TSV (defaults to ranks_<split>_<filter>.tsv in the checkpoint).
        #[arg(long)]
        ranks: Option<PathBuf>,
        /// Evaluate at most this many queries.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Answer one query, print the top entities and write its explanation.
    Forecast {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value = "explanation.json")]
        explain_out: PathBuf,
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Export the verified inference graph of one query.
    Explain {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        query: QueryArgs,
        #[arg(long, default_value = "json")]
        format: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time segment kernels against per-segment loops.
    BenchSegments {
        #[arg(long, default_value_t = 100_000)]
        size: usize,
        #[arg(long, default_value_t = 1_000)]
        segments: usize,
        #[arg(long, default_value_t = 5)]
        iters: usize,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    subject: String,
    /// Predicate name; append `^-1` for the reciprocal.
    #[arg(long)]
    predicate: String,
    /// Integer timestamp or YYYY-MM-DD.
    #[arg(long)]
    time: String,
}

fn load_data(dir: &Path) -> Result<SplitData> {
    SplitData::load_dir(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

struct Loaded {
    data: SplitData,
    ckpt: Checkpoint,
    cfg: Config,
}

fn load_model(cli: &Cli, m: &ModelArgs) -> Result<Loaded> {
    let ckpt = Checkpoint::load(&m.checkpoint)
        .with_context(|| format!("loading checkpoint from {}", m.checkpoint.display()))?;
    let data = load_data(&m.data)?;
    let vocab = data.vocab();
    if vocab.entities.names() != ckpt.vocab.entities.names() || vocab.predicates.names() != ckpt.vocab.predicates.names() {
        bail!(
            "dataset {} does not match the checkpoint vocabulary ({} entities / {} predicates vs {} / {})",
            m.data.display(),
            vocab.entities.len(),
            vocab.predicates.len(),
            ckpt.vocab.entities.len(),
            ckpt.vocab.predicates.len()
        );
    }
    let mut cfg = Config {
        hyper: ckpt.hyper.clone(),
        sampling: ckpt.sampling.clone(),
        ..Config::default()
    };
    if let Some(path) = &cli.config {
        cfg.update_from_file(path)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(Loaded { data, ckpt, cfg })
}

fn base_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn resolve_query(l: &Loaded, q: &QueryArgs) -> Result<Query> {
    let vocab = &l.ckpt.vocab;
    let subject = vocab.entities.get(&q.subject).ok_or_else(|| Error::UnknownName {
        vocab: "entity",
        name: q.subject.clone(),
    })?;
    let predicate = vocab
        .predicate_id(&q.predicate, l.ckpt.base_predicates)
        .ok_or_else(|| Error::UnknownName {
            vocab: "predicate",
            name: q.predicate.clone(),
        })?;
    let time = vocab.timestamp(&q.time)?;
    Ok(Query::new(subject, predicate, time))
}

fn explanation(l: &Loaded, q: Query) -> Result<(tkgx::engine::Forecast, ExplanationDocument)> {
    let adj = l.data.adjacency();
    let fc = Forecaster::new(&l.ckpt.params, &l.cfg.hyper, &l.cfg.sampling, &adj);
    let f = fc.forecast(q, 0)?;
    let violations = verify_graph(&f.graph, &adj);
    if let Some(v) = violations.first() {
        bail!("inference graph failed verification ({} issues, first: {})", violations.len(), v.reason);
    }
    let doc = ExplanationDocument::from_forecast(
        &f,
        &l.ckpt.vocab,
        l.ckpt.base_predicates,
        &l.ckpt.fingerprint,
        &|e| l.ckpt.is_unseen(e),
    );
    doc.check()?;
    Ok((f, doc))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { data, out } => {
            let start = Instant::now();
            let d = load_data(data)?;
            let stats = d.stats();
            if let Some(out) = out {
                fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
                d.vocab().entities.write_tsv(&out.join("entities.tsv"))?;
                d.vocab().predicates.write_tsv(&out.join("predicates.tsv"))?;
            }
            let report = json!({ "stats": stats, "seconds": start.elapsed().as_secs_f64() });
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Train {
            data,
            out,
            epochs,
            valid_limit,
        } => {
            let mut cfg = base_config(cli)?;
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            let d = load_data(data)?;
            let dims = ModelDims {
                num_entities: d.num_entities(),
                num_predicates: d.num_predicates(),
                dim_static: cfg.hyper.dim_static,
                dim_time: cfg.hyper.dim_time,
                steps: cfg.hyper.steps,
            };
            let t_max = d.train.max_timestamp().unwrap_or(1);
            let init = ParameterSet::init(dims, t_max, cfg.train.seed);
            let adj = d.adjacency();
            let facts = FactIndex::build(d.all_quadruples());
            let valid = match valid_limit {
                Some(n) => &d.valid.quadruples[..(*n).min(d.valid.len())],
                None => &d.valid.quadruples[..],
            };
            let inputs = TrainingData {
                train: &d.train.quadruples,
                valid,
                adj: &adj,
                facts: &facts,
            };
            let mut seen = vec![false; d.num_entities()];
            for q in &d.train.quadruples {
                seen[q.subject as usize] = true;
                seen[q.object as usize] = true;
            }
            let unseen: Vec<EntityId> = (0..d.num_entities() as EntityId).filter(|&e| !seen[e as usize]).collect();
            let save = |params: ParameterSet| -> Result<String> {
                let ckpt = Checkpoint::new(
                    params,
                    cfg.hyper.clone(),
                    cfg.sampling.clone(),
                    d.vocab().clone(),
                    d.base_predicates(),
                    unseen.clone(),
                );
                ckpt.save(out)?;
                Ok(ckpt.fingerprint)
            };
            match fit(init, &inputs, &cfg.hyper, &cfg.sampling, &cfg.train) {
                Ok(outcome) => {
                    let fp = save(outcome.params)?;
                    let trace = serde_json::to_string_pretty(&outcome.trace)?;
                    fs::write(out.join("trace.json"), &trace)?;
                    let report = json!({
                        "checkpoint": out,
                        "fingerprint": fp,
                        "best_epoch": outcome.best_epoch,
                        "trace": outcome.trace,
                    });
                    println!("{}", serde_json::to_string_pretty(&report)?);
                }
                Err(Error::Diverged { epoch, last_good }) => {
                    save(*last_good)?;
                    bail!("training diverged at epoch {epoch}; last good parameters saved to {}", out.display());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Evaluate {
            model,
            filter,
            ks,
            split,
            ranks,
            limit,
        } => {
            let l = load_model(cli, model)?;
            let scheme = filter_registry().get(filter)?;
            let quads = match split.as_str() {
                "train" => &l.data.train.quadruples,
                "valid" => &l.data.valid.quadruples,
                "test" => &l.data.test.quadruples,
                other => bail!("unknown split `{other}` (train, valid, test)"),
            };
            let quads = &quads[..limit.unwrap_or(quads.len()).min(quads.len())];
            let adj = l.data.adjacency();
            let facts = FactIndex::build(l.data.all_quadruples());
            let fc = Forecaster::new(&l.ckpt.params, &l.cfg.hyper, &l.cfg.sampling, &adj);
            let report = evaluate(&fc, quads, &facts, scheme.as_ref(), ks)?;
            let path = ranks
                .clone()
                .unwrap_or_else(|| model.checkpoint.join(format!("ranks_{split}_{}.tsv", scheme.name())));
            fs::write(&path, report.ranks_tsv()).with_context(|| format!("writing {}", path.display()))?;
            let out = json!({
                "split": split,
                "filter": report.filter,
                "queries": report.metrics.count,
                "mrr": report.metrics.mrr,
                "hits": report.metrics.hits,
                "ranks_file": path,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Forecast {
            model,
            query,
            top,
            explain_out,
            format,
        } => {
            let l = load_model(cli, model)?;
            let exporter = exporter_registry().get(format)?;
            let q = resolve_query(&l, query)?;
            let (f, doc) = explanation(&l, q)?;
            for (i, (e, s)) in f.ranked.iter().take(*top).enumerate() {
                let name = l.ckpt.vocab.entities.name(*e).unwrap_or("?");
                println!("{}\t{}\t{:.6}", i + 1, name, s);
            }
            fs::write(explain_out, exporter.export(&doc)?)
                .with_context(|| format!("writing {}", explain_out.display()))?;
            log::info!("explanation written to {}", explain_out.display());
        }
        Command::Explain {
            model,
            query,
            format,
            out,
        } => {
            let l = load_model(cli, model)?;
            let exporter = exporter_registry().get(format)?;
            let q = resolve_query(&l, query)?;
            let (_, doc) = explanation(&l, q)?;
            let text = exporter.export(&doc)?;
            match out {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
        Command::BenchSegments { size, segments, iters } => {
            let report = tkgx::bench::run(*size, *segments, *iters, cli.seed.unwrap_or(0))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
