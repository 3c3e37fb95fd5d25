use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use newsbench::corpus::{
    generate_synthetic_corpus, load_articles, load_tweet_series, Corpus, CorpusShape, LoadOptions,
};
use newsbench::error::{Error, Result};
use newsbench::features::{load_or_embed, EmbeddingService, EmbeddingStore, ServiceConfig};
use newsbench::labeling::write_labels;
use newsbench::harness::{
    emit_report, run_ablation, run_embedding_swap, run_experiment, run_length_sweep, DataConfig,
    Dataset, ExperimentConfig, ResultTable, RunManifest, ABLATION_VIEWS, MANIFEST_FILE,
    SWEEP_LENGTHS,
};

#[derive(Parser)]
#[command(name = "newsbench", version, about = "Fake-news and early-virality benchmark runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the worker count.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and build or check its embedding cache.
    Ingest {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_shape)]
        shape: CorpusShape,
        /// Embedding store to check, or to create when `--service-url` is given.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        service_url: Option<String>,
        #[arg(long, default_value_t = 64)]
        service_batch: usize,
        #[arg(long, default_value_t = 60)]
        service_timeout: u64,
        #[arg(long)]
        allow_empty_description: bool,
    },
    /// Fit the label rule and write labels plus imbalance diagnostics.
    Label(Common),
    /// Cross-validated run of one config.
    Run(Common),
    /// Same run under the all, text-only and numeric-only views.
    Ablate(Common),
    /// Same run at several series lengths.
    SweepLength {
        #[command(flatten)]
        common: Common,
        /// Comma-separated lengths.
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_LENGTHS.to_vec())]
        lengths: Vec<usize>,
    },
    /// Paired runs that differ only in the embedding store.
    SwapEmbeddings {
        #[command(flatten)]
        common: Common,
        /// Second store file.
        #[arg(long, conflicts_with = "dim_b")]
        embeddings_b: Option<PathBuf>,
        /// For synthetic data: regenerate the store at this dimension.
        #[arg(long)]
        dim_b: Option<usize>,
    },
    /// Merge the rows of finished runs into one table.
    Report {
        /// Run directories or manifest files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "report")]
        stem: String,
    },
}

fn parse_shape(s: &str) -> std::result::Result<CorpusShape, String> {
    match s {
        "article" => Ok(CorpusShape::Article),
        "series" => Ok(CorpusShape::Series),
        other => Err(format!("unknown corpus shape {other:?} (article or series)")),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ingest(
    corpus: &Path,
    shape: CorpusShape,
    embeddings: Option<&Path>,
    service: Option<ServiceConfig>,
    allow_empty_description: bool,
) -> Result<()> {
    let corpus = match shape {
        CorpusShape::Article => Corpus::Articles(load_articles(
            corpus,
            &LoadOptions {
                allow_empty_description,
            },
        )?),
        CorpusShape::Series => Corpus::Series(load_tweet_series(corpus)?),
    };
    println!("{} items", corpus.len());
    let Some(path) = embeddings else {
        return Ok(());
    };
    let store = match service {
        Some(cfg) => load_or_embed(path, &corpus.texts(), &EmbeddingService::new(cfg)?)?,
        None => EmbeddingStore::load(path)?,
    };
    store.ensure_covers(corpus.embedding_keys().iter().map(String::as_str))?;
    println!("{}: dim {}, {} vectors, full coverage", path.display(), store.dim(), store.len());
    Ok(())
}

fn label(cfg: &ExperimentConfig) -> Result<()> {
    let ds = Dataset::load(&cfg.data, &cfg.labels)?;
    for d in &ds.labeling.diagnostics {
        log::warn!("{d}");
    }
    let labels = cfg.output_dir.join("labels.jsonl");
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    write_labels(&labels, &ds.labeling.instances)?;
    let summary = serde_json::json!({
        "rule": ds.labeling.rule,
        "imbalance": ds.imbalance,
        "diagnostics": ds.labeling.diagnostics,
    });
    write(&cfg.output_dir.join("label_summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} items, {} positive ({:.4}); written to {}",
        ds.imbalance.n,
        ds.imbalance.n_positive,
        ds.imbalance.prevalence,
        labels.display()
    );
    Ok(())
}

fn store_b(cfg: &ExperimentConfig, path: Option<&Path>, dim: Option<usize>) -> Result<EmbeddingStore> {
    match (path, dim, &cfg.data) {
        (Some(p), None, _) => EmbeddingStore::load(p),
        (None, Some(d), DataConfig::Synthetic { synthetic }) => {
            let mut spec = synthetic.clone();
            spec.embedding_dim = d;
            Ok(generate_synthetic_corpus(&spec)?.store)
        }
        (None, Some(_), DataConfig::Files { .. }) => Err(Error::Config(
            "--dim-b only applies to synthetic data; pass --embeddings-b".into(),
        )),
        _ => Err(Error::Config("pass one of --embeddings-b or --dim-b".into())),
    }
}

fn report(runs: &[PathBuf], out: &Path, stem: &str) -> Result<()> {
    let mut rows = Vec::new();
    for r in runs {
        let path = if r.is_dir() { r.join(MANIFEST_FILE) } else { r.clone() };
        let m = RunManifest::load(&path)?;
        match m.row {
            Some(row) => rows.push(row),
            None => {
                return Err(Error::Run(format!("{}: run did not complete", path.display())));
            }
        }
    }
    let table = ResultTable::new(rows);
    emit_report(&table, out, stem)?;
    print!("{}", table.to_text());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            corpus,
            shape,
            embeddings,
            service_url,
            service_batch,
            service_timeout,
            allow_empty_description,
        } => {
            let service = service_url.map(|url| ServiceConfig {
                url,
                batch_size: service_batch,
                timeout_secs: service_timeout,
            });
            if service.is_some() && embeddings.is_none() {
                return Err(Error::Config("--service-url needs --embeddings".into()));
            }
            ingest(&corpus, shape, embeddings.as_deref(), service, allow_empty_description)
        }
        Command::Label(c) => label(&c.load()?),
        Command::Run(c) => {
            let out = run_experiment(&c.load()?)?;
            print!("{}", ResultTable::new(vec![out.row]).to_text());
            Ok(())
        }
        Command::Ablate(c) => {
            let cfg = c.load()?;
            let ds = Dataset::load(&cfg.data, &cfg.labels)?;
            print!("{}", run_ablation(&cfg, &ds, &ABLATION_VIEWS)?.table.to_text());
            Ok(())
        }
        Command::SweepLength { common, lengths } => {
            let cfg = common.load()?;
            let ds = Dataset::load(&cfg.data, &cfg.labels)?;
            let res = run_length_sweep(&cfg, &ds, &lengths)?;
            print!("{}", res.study.table.to_text());
            let flag = if res.correlation.zero_variance { " (zero variance)" } else { "" };
            println!("r(len, F1) = {:.3}{flag}", res.correlation.r);
            Ok(())
        }
        Command::SwapEmbeddings {
            common,
            embeddings_b,
            dim_b,
        } => {
            let cfg = common.load()?;
            let ds = Dataset::load(&cfg.data, &cfg.labels)?;
            let b = store_b(&cfg, embeddings_b.as_deref(), dim_b)?;
            let res = run_embedding_swap(&cfg, &ds, b)?;
            print!("{}", res.study.table.to_text());
            println!("delta F1 = {:+.4}", res.deltas.f1);
            Ok(())
        }
        Command::Report { runs, out, stem } => report(&runs, &out, &stem),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
