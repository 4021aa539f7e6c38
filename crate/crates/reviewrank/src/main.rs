use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reviewrank::config::{validate_config, ConfigError, ExperimentConfig, ModelKind};
use reviewrank::pipeline::{self, PipelineError};
use reviewrank::report::Metric;

#[derive(Parser, Debug)]
#[command(name = "reviewrank", version, about = "Top-N recommendation with and without review text")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded everything, for bit-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the bundled synthetic review dataset.
    Toy {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        toy_seed: Option<u64>,
    },
    /// Parse, filter and split a dataset; build vocabulary and documents.
    Prepare {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        k_core: Option<usize>,
        /// Abort on the first malformed line.
        #[arg(long)]
        strict: bool,
    },
    /// Train a model on the prepared split.
    Train {
        #[arg(long)]
        model: Option<String>,
        /// Train the shared retrieval model instead.
        #[arg(long, conflicts_with = "model")]
        retrieval: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Two-stage evaluation of a trained model.
    Eval {
        #[arg(long)]
        model: Option<String>,
        /// Also write `user<TAB>HR<TAB>nDCG` rows.
        #[arg(long)]
        per_user: bool,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Count a user as a hit if any held-out item is in the top K.
        #[arg(long)]
        any_hit: bool,
    },
    /// Time reranking latency per scored entry.
    Bench {
        /// Models to time; repeatable. Defaults to the configured model.
        #[arg(long = "model")]
        models: Vec<String>,
        /// Also run the multi-threaded throughput mode.
        #[arg(long, default_value_t = 0)]
        throughput_threads: usize,
    },
    /// Merge evaluation reports into a comparison table.
    Report {
        #[arg(long = "eval", required = true, num_args = 1..)]
        evals: Vec<PathBuf>,
        #[arg(long)]
        bench: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MetricArg::Ndcg)]
        metric: MetricArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Hr,
    Ndcg,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, PipelineError> {
    let mut kv = Vec::new();
    for s in &cli.global.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: 0, text: s.clone() })?;
        kv.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            kv.push((k.to_owned(), v));
        }
    };
    let g = &cli.global;
    push("output_dir", g.out.as_ref().map(|p| p.display().to_string()));
    push("seed", g.seed.map(|s| s.to_string()));
    push("threads", g.threads.map(|s| s.to_string()));
    if g.deterministic {
        push("deterministic", Some("true".into()));
    }
    match &cli.command {
        Command::Prepare { dataset, k_core, strict } => {
            push("dataset", dataset.as_ref().map(|p| p.display().to_string()));
            push("k_core", k_core.map(|k| k.to_string()));
            if *strict {
                push("strict", Some("true".into()));
            }
        }
        Command::Train { model, epochs, dim, .. } => {
            push("model", model.clone());
            push("epochs", epochs.map(|e| e.to_string()));
            push("dim", dim.map(|d| d.to_string()));
        }
        Command::Eval { model, k, m, any_hit, .. } => {
            push("model", model.clone());
            push("k", k.map(|k| k.to_string()));
            push("m", m.map(|m| m.to_string()));
            if *any_hit {
                push("hit_mode", Some("any-hit".into()));
            }
        }
        _ => {}
    }
    Ok(kv)
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let text = match &cli.global.config {
        Some(p) => std::fs::read_to_string(p).map_err(|_| PipelineError::MissingFile {
            what: "config file",
            path: p.clone(),
            hint: "check the --config path".into(),
        })?,
        None => String::new(),
    };
    let (cfg, warnings) = validate_config(&text, &overrides(cli)?)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Command::Toy { output, toy_seed } = &cli.command {
        let n = pipeline::write_toy(output, *toy_seed)?;
        println!("wrote {n} reviews to {}", output.display());
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Toy { .. } => unreachable!(),
        Command::Prepare { .. } => {
            let s = pipeline::prepare(&cfg)?;
            println!(
                "{} users, {} items, {} interactions after {}-core filtering (density {:.3e}); {} train / {} test pairs",
                s.filtered.n_users,
                s.filtered.n_items,
                s.filtered.n_interactions,
                cfg.k_core,
                s.filtered.density,
                s.train_pairs,
                s.test_pairs
            );
            println!(
                "skipped {} records, merged {} duplicates; vocabulary {} tokens; {} empty documents",
                s.skipped, s.duplicates, s.vocab_size, s.empty_documents
            );
        }
        Command::Train { retrieval, .. } => {
            let s = pipeline::train(&cfg, *retrieval)?;
            println!(
                "trained {} epochs in {:.2}s, final loss {:.6}; checkpoint {}",
                s.epochs,
                s.seconds,
                s.final_loss,
                s.checkpoint.display()
            );
        }
        Command::Eval { per_user, .. } => {
            let f = pipeline::evaluate(&cfg, *per_user)?;
            let r = &f.report;
            println!(
                "{}: HR@{k} {:.6}  nDCG@{k} {:.6}  over {} users (M = {})",
                r.model,
                r.mean_hr,
                r.mean_ndcg,
                r.per_user.len(),
                r.m,
                k = r.k
            );
        }
        Command::Bench { models, throughput_threads } => {
            let kinds = if models.is_empty() {
                vec![cfg.model]
            } else {
                models
                    .iter()
                    .map(|m| m.parse::<ModelKind>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(ConfigError::from)?
            };
            for row in pipeline::bench(&cfg, &kinds, *throughput_threads)? {
                println!("{}\t{}\t{:.3e} s/entry", row.model, row.mode, row.result.sec_per_entry);
            }
        }
        Command::Report { evals, bench, metric } => {
            let metric = match metric {
                MetricArg::Hr => Metric::Hr,
                MetricArg::Ndcg => Metric::Ndcg,
            };
            print!("{}", pipeline::report(&cfg, evals, bench.as_deref(), metric)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
