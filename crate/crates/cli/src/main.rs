mod config;

use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlada::corpus::{
    load_embeddings, load_jsonl_dataset, split_classes, tokenize, ClassSplit, Dataset, EmbeddingTable, JsonlFields,
    Vocab,
};
use mlada::episodes::{sample_episode, EpisodeSpec, SourceExclusion};
use mlada::harness::{
    dump_attention, dump_embeddings, gen_synthetic_corpus, load_checkpoint, meta_test, run_gradcheck_suite,
    test_task, train, write_attention, Checkpoint, SynthConfig, TrainFiles,
};
use mlada::model::{EpisodeBatch, Mlada};
use mlada::{seeded_rng, Error, ErrorKind, Execution, Result};

use config::{parse_assignment, RunConfig, SplitSpec};

#[derive(Parser)]
#[command(name = "mlada", version, about = "Few-shot text classification by adversarial meta-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// JSON-lines dataset, one example per line
    #[arg(long)]
    data: PathBuf,
    /// Word vectors in text format
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "label")]
    label_field: String,
    #[arg(long, default_value = "text")]
    text_field: String,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a model and write metrics and the best checkpoint to --out
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// key=value lines or a JSON object; keys mirror the training and model settings
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config entry, e.g. --set lr=0.01
        #[arg(long = "set", value_parser = parse_assignment)]
        overrides: Vec<(String, serde_json::Value)>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Meta-test a checkpoint on its split's test classes
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1000)]
        n_episodes: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 5)]
        n_way: usize,
        #[arg(long, default_value_t = 1)]
        k_shot: usize,
        /// Queries per class; defaults to the checkpoint's training value
        #[arg(long)]
        n_query: Option<usize>,
        /// Also write the full report, per-episode accuracies included
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Write a synthetic keyword corpus and its word vectors
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        n_classes: usize,
        #[arg(long, default_value_t = 50)]
        examples_per_class: usize,
        #[arg(long, default_value_t = 12)]
        sentence_len: usize,
        #[arg(long, default_value_t = 1)]
        keywords_per_class: usize,
        #[arg(long, default_value_t = 4)]
        vocab_noise_size: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check every analytic gradient against finite differences
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print per-token attention weights for a sentence
    DumpAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        text: String,
        /// Write TSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the query sentence embeddings of one test episode as CSV
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 5)]
        n_way: usize,
        #[arg(long, default_value_t = 1)]
        k_shot: usize,
        #[arg(long, default_value_t = 25)]
        n_query: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the composition of sampled training episodes as JSON lines
    SampleEpisodes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label_field: String,
        #[arg(long, default_value = "text")]
        text_field: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        n_way: usize,
        #[arg(long, default_value_t = 1)]
        k_shot: usize,
        #[arg(long, default_value_t = 25)]
        n_query: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure of a command, already mapped to its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            data,
            config,
            overrides,
            out,
        } => cmd_train(&data, config.as_deref(), overrides, &out)?,
        Command::Eval {
            checkpoint,
            data,
            n_episodes,
            seeds,
            n_way,
            k_shot,
            n_query,
            out,
            sequential,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let n_query = n_query.or(ckpt.train.as_ref().map(|t| t.n_query)).unwrap_or(25);
            let spec = EpisodeSpec::new(n_way, k_shot, n_query)?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            cmd_eval(&ckpt, &data, &spec, n_episodes, &seeds, exec, out.as_deref())?
        }
        Command::Synth {
            out,
            n_classes,
            examples_per_class,
            sentence_len,
            keywords_per_class,
            vocab_noise_size,
            dim,
            seed,
        } => {
            let cfg = SynthConfig {
                n_classes,
                examples_per_class,
                sentence_len,
                keywords_per_class,
                vocab_noise_size,
                dim,
                seed,
            };
            let corpus = gen_synthetic_corpus(&cfg)?;
            corpus.write(&out)?;
            log::info!(
                "wrote {} examples in {} classes to {}",
                corpus.dataset.len(),
                corpus.dataset.num_classes(),
                out.display()
            );
        }
        Command::Gradcheck { seed } => {
            let outcomes = run_gradcheck_suite(seed)?;
            let mut failed = 0;
            for o in &outcomes {
                println!(
                    "{} {}: max relative error {:.3e} over {} of {} coordinates",
                    if o.passed() { "PASS" } else { "FAIL" },
                    o.name,
                    o.max_rel_error,
                    o.coordinates,
                    o.parameters
                );
                failed += usize::from(!o.passed());
            }
            if failed > 0 {
                return Err(Failure {
                    code: 3,
                    message: format!("{failed} gradient checks failed"),
                });
            }
        }
        Command::DumpAttention {
            checkpoint,
            embeddings,
            text,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let tokens = tokenize(&text);
            if tokens.is_empty() {
                return Err(Error::Invalid("text has no tokens".into()).into());
            }
            let vocab = Vocab::from_tokens(&tokens);
            let (table, _) = load_embeddings(&embeddings, &vocab)?;
            check_dim(&ckpt.model, &table)?;
            let ids: Vec<u32> = tokens.iter().map(|t| vocab.lookup(t).expect("interned")).collect();
            let weights = dump_attention(&ckpt.model, &ids, &vocab, &table)?;
            match out {
                Some(path) => {
                    let mut f = create(&path)?;
                    write_attention(&mut f, &weights).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
                    f.flush().map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
                }
                None => write_attention(&mut io::stdout().lock(), &weights)
                    .map_err(|e| Error::Invalid(format!("stdout: {e}")))?,
            }
        }
        Command::DumpEmbeddings {
            checkpoint,
            data,
            n_way,
            k_shot,
            n_query,
            seed,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let (dataset, table) = load_data(&data, ckpt.model.config.max_len)?;
            check_dim(&ckpt.model, &table)?;
            let split = checkpoint_split(&ckpt, &dataset)?;
            let spec = EpisodeSpec::new(n_way, k_shot, n_query)?;
            let episode = test_task(&dataset, &split.test, &spec, seed, 0)?;
            let batch = EpisodeBatch::from_episode(&dataset, &table, &episode)?;
            let mut f = create(&out)?;
            let rows = dump_embeddings(&ckpt.model, &batch, &mut f)?;
            f.flush().map_err(|e| Error::Invalid(format!("{}: {e}", out.display())))?;
            log::info!("wrote {rows} rows to {}", out.display());
        }
        Command::SampleEpisodes {
            data,
            label_field,
            text_field,
            n,
            n_way,
            k_shot,
            n_query,
            seed,
        } => {
            let fields = JsonlFields {
                label: label_field,
                text: text_field,
            };
            let mut vocab = Vocab::new();
            let (dataset, _) = load_jsonl_dataset(&data, &fields, &mut vocab, usize::MAX)?;
            let spec = EpisodeSpec::new(n_way, k_shot, n_query)?;
            let allowed: BTreeSet<usize> = dataset.classes().collect();
            let mut rng = seeded_rng(seed, 0);
            let mut stdout = io::stdout().lock();
            for i in 0..n {
                let ep = sample_episode(&dataset, &allowed, &spec, SourceExclusion::All, &mut rng)?;
                let line = serde_json::json!({
                    "episode": i,
                    "classes": ep.classes.iter().map(|&c| dataset.class_name(c)).collect::<Vec<_>>(),
                    "support": ep.support.iter().map(|&(e, _)| e).collect::<Vec<_>>(),
                    "query": ep.query.iter().map(|&(e, _)| e).collect::<Vec<_>>(),
                    "source": ep.source,
                    "source_classes": ep.source.iter().map(|&e| dataset.class_name(dataset.example(e).label)).collect::<BTreeSet<_>>(),
                });
                writeln!(stdout, "{line}").map_err(|e| Error::Invalid(format!("stdout: {e}")))?;
            }
        }
    }
    Ok(())
}

fn cmd_train(
    data: &DataArgs,
    config: Option<&Path>,
    overrides: Vec<(String, serde_json::Value)>,
    out: &Path,
) -> Result<()> {
    let mut entries = match config {
        Some(path) => config::parse_entries(&fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?)?,
        None => serde_json::Map::new(),
    };
    entries.extend(overrides);
    let RunConfig {
        train: cfg,
        mut model,
        dim_set,
        split,
    } = config::build(entries)?;
    let (dataset, table) = load_data(data, model.max_len)?;
    if dim_set && model.dim != table.dim() {
        return Err(Error::Config(format!(
            "config dim {} but the embeddings have dimension {}",
            model.dim,
            table.dim()
        )));
    }
    model.dim = table.dim();
    let split = match split {
        SplitSpec::Counts { counts, seed } => {
            let all: BTreeSet<usize> = dataset.classes().collect();
            split_classes(&all, counts, &mut seeded_rng(seed, 0))?
        }
        SplitSpec::Named(named) => named.resolve(&dataset)?,
    };
    let model = Mlada::new(model, cfg.seed)?;
    let outcome = train(&dataset, &table, &split, &cfg, model, Some(out))?;
    let summary = serde_json::json!({
        "epochs_run": outcome.epochs_run,
        "best_epoch": outcome.best_epoch,
        "best_val_accuracy": outcome.best_val_accuracy,
        "checkpoint": out.join(TrainFiles::CHECKPOINT),
    });
    println!("{summary}");
    Ok(())
}

fn cmd_eval(
    ckpt: &Checkpoint,
    data: &DataArgs,
    spec: &EpisodeSpec,
    n_episodes: usize,
    seeds: &[u64],
    exec: Execution,
    out: Option<&Path>,
) -> Result<()> {
    let (dataset, table) = load_data(data, ckpt.model.config.max_len)?;
    check_dim(&ckpt.model, &table)?;
    let split = checkpoint_split(ckpt, &dataset)?;
    let report = meta_test(
        &ckpt.model,
        &dataset,
        &table,
        &split.test,
        Some(&split.train),
        spec,
        n_episodes,
        seeds,
        exec,
    )?;
    if let Some(path) = out {
        let f = create(path)?;
        serde_json::to_writer_pretty(f, &report).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    }
    let summary = serde_json::json!({
        "mean_accuracy": report.mean_accuracy,
        "std": report.std,
        "ci95": report.ci95,
        "n_episodes": report.n_episodes,
        "seeds": report.seeds,
        "per_seed_mean": report.per_seed_mean,
    });
    println!("{summary}");
    Ok(())
}

fn load_data(args: &DataArgs, max_len: usize) -> Result<(Dataset, EmbeddingTable)> {
    let fields = JsonlFields {
        label: args.label_field.clone(),
        text: args.text_field.clone(),
    };
    let mut vocab = Vocab::new();
    let (dataset, stats) = load_jsonl_dataset(&args.data, &fields, &mut vocab, max_len)?;
    log::info!(
        "{} examples in {} classes ({} empty skipped, {} truncated)",
        dataset.len(),
        dataset.num_classes(),
        stats.skipped_empty,
        stats.truncated
    );
    let (table, _) = load_embeddings(&args.embeddings, &vocab)?;
    Ok((dataset, table))
}

fn checkpoint_split(ckpt: &Checkpoint, dataset: &Dataset) -> Result<ClassSplit> {
    ckpt.split
        .as_ref()
        .ok_or_else(|| Error::Checkpoint("checkpoint does not record a class split".into()))?
        .resolve(dataset)
}

fn check_dim(model: &Mlada, table: &EmbeddingTable) -> Result<()> {
    if model.config.dim != table.dim() {
        return Err(Error::Data(format!(
            "model expects {}-dimensional word vectors, embeddings have {}",
            model.config.dim,
            table.dim()
        )));
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
