use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

use eventcat::catalog::{self, BoundingBox, CatalogFormat, CatalogQuery};
use eventcat::classifier::{ClassWeights, FeaturizerConfig, TrainParams};
use eventcat::corpus::{generate_corpus, SyntheticCorpusSpec};
use eventcat::ingestion::{load_sources, RawStore, SourceDescriptor};
use eventcat::pipeline::{self, PipelineConfig, PipelineError, StageSummary, EXIT_CONFIG, EXIT_STAGE};
use eventcat::taxonomy::{CategoryId, CategoryKey, Taxonomy};
use eventcat::textprep::{parse_timestamp, Vocabulary, DEFAULT_MAX_CHARS};

#[derive(Parser)]
#[command(
    name = "eventcat",
    version,
    about = "Classify tourist events into a hierarchical taxonomy and build a filterable catalog"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch configured sources into the raw store
    Ingest {
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        parallel: usize,
        /// Base timestamp for fetched_at stamps (RFC 3339)
        #[arg(long)]
        fetched_at: Option<String>,
    },
    /// Clean raw events into the clean store
    Clean {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_CHARS)]
        max_chars: usize,
    },
    /// Build the token vocabulary from a clean store
    Vocab {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        min_freq: usize,
    },
    /// Create a seeded encoder weight file over a vocabulary
    InitEncoder {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        model_dim: Option<usize>,
        #[arg(long)]
        heads: Option<usize>,
    },
    /// Write the CLS vector of every clean event
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Vocabulary file to use instead of the one stored with the weights
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Train the classifier on a labeled clean store
    Train(TrainArgs),
    /// Classify a clean store with the rule cascade and the model
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Score predictions and write the classification report
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        confusion: Option<PathBuf>,
        #[arg(long)]
        normalized_confusion: Option<PathBuf>,
    },
    /// Build, filter and export the event catalog
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Write a synthetic labeled corpus to a raw store
    GenerateCorpus {
        /// Corpus spec file, or "bundled"
        #[arg(long, default_value = "bundled")]
        spec: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every stage on the bundled synthetic corpus
    Demo {
        #[arg(long, default_value = "eventcat-demo")]
        workdir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every stage as described by a config file
    RunAll {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Featurizer config file (JSON); hashed n-grams when omitted
    #[arg(long)]
    featurizer: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// auto, none, or a JSON file mapping category ids to weights
    #[arg(long, default_value = "auto")]
    class_weights: String,
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Join clean events with their predictions
    Build {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep the entries that match every given clause
    Filter {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Category names or ids, comma separated
        #[arg(long, value_delimiter = ',')]
        include: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        #[arg(long)]
        city: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: Option<String>,
        /// lat_min,lat_max,lon_min,lon_max
        #[arg(long)]
        bbox: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a catalog to CSV or JSONL
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        format: CatalogFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error raised when the command line or a config file is unusable.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn stage<T>(r: pipeline::StageResult<T>) -> Result<T> {
    r.map_err(|e| anyhow!(e))
}

fn report(s: &StageSummary) {
    println!("{s}");
}

fn taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    stage(pipeline::load_taxonomy(path))
}

fn sources(path: Option<&Path>) -> Result<Vec<SourceDescriptor>> {
    match path {
        Some(p) => load_sources(p).map_err(|e| config_error(e.to_string())),
        None => Ok(Vec::new()),
    }
}

fn timestamp(arg: &str, value: &str) -> Result<DateTime<chrono::FixedOffset>> {
    parse_timestamp(value).ok_or_else(|| config_error(format!("--{arg}: cannot parse timestamp {value:?}")))
}

fn corpus_spec(spec: &str) -> Result<SyntheticCorpusSpec> {
    if spec == "bundled" {
        Ok(SyntheticCorpusSpec::bundled())
    } else {
        SyntheticCorpusSpec::load(Path::new(spec)).map_err(|e| config_error(e.to_string()))
    }
}

fn class_weights(arg: &str) -> Result<ClassWeights> {
    match arg {
        "auto" => Ok(ClassWeights::Auto),
        "none" => Ok(ClassWeights::None),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading class weights {path}"))?;
            let map: BTreeMap<CategoryId, f64> =
                serde_json::from_str(&text).map_err(|e| config_error(format!("{path}: {e}")))?;
            Ok(ClassWeights::Explicit(map))
        }
    }
}

fn resolve_names(tax: &Taxonomy, names: &[String]) -> Result<Option<std::collections::BTreeSet<CategoryId>>> {
    if names.is_empty() {
        return Ok(None);
    }
    names
        .iter()
        .map(|n| tax.resolve(CategoryKey::parse(n)).map(|node| node.id).map_err(|e| config_error(e.to_string())))
        .collect::<Result<_>>()
        .map(Some)
}

fn catalog_format_of(path: &Path) -> CatalogFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => CatalogFormat::Csv,
        _ => CatalogFormat::Jsonl,
    }
}

fn read_catalog(path: &Path, tax: &Taxonomy) -> Result<Vec<catalog::CatalogEntry>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let outcome = catalog::import(&text, catalog_format_of(path), tax).with_context(|| path.display().to_string())?;
    for swap in &outcome.swaps {
        eprintln!("corrected coordinates in {}: {swap}", path.display());
    }
    Ok(outcome.entries)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { sources: path, out, parallel, fetched_at } => {
            let base = match fetched_at {
                Some(v) => timestamp("fetched-at", &v)?.with_timezone(&Utc),
                None => Utc::now(),
            };
            let list = sources(Some(&path))?;
            report(&stage(pipeline::ingest(&list, None, &out, parallel, base))?);
        }
        Command::Clean { input, out, max_chars } => report(&stage(pipeline::clean(&input, &out, max_chars))?),
        Command::Vocab { input, out, size, min_freq } => {
            report(&stage(pipeline::vocab(&input, &out, size, min_freq))?.1)
        }
        Command::InitEncoder { vocab, out, seed, layers, model_dim, heads } => {
            let v = Vocabulary::load(&vocab).with_context(|| vocab.display().to_string())?;
            let mut settings = pipeline::EncoderSettings::default();
            settings.num_layers = layers.unwrap_or(settings.num_layers);
            settings.model_dim = model_dim.unwrap_or(settings.model_dim);
            settings.num_heads = heads.unwrap_or(settings.num_heads);
            report(&stage(pipeline::init_encoder(&v, &settings, seed, &out))?);
        }
        Command::Encode { model, input, out, vocab } => {
            report(&stage(pipeline::encode(&input, &model, vocab.as_deref(), &out))?)
        }
        Command::Train(args) => {
            let featurizer = match &args.featurizer {
                Some(p) => FeaturizerConfig::load(p).map_err(|e| config_error(e.to_string()))?,
                None => FeaturizerConfig::hashed(4096, 0),
            };
            let defaults = TrainParams::default();
            let params = TrainParams {
                epochs: args.epochs.unwrap_or(defaults.epochs),
                learning_rate: args.lr.unwrap_or(defaults.learning_rate),
                batch_size: args.batch_size.unwrap_or(defaults.batch_size),
                l2: args.l2.unwrap_or(defaults.l2),
                class_weights: class_weights(&args.class_weights)?,
                seed: args.seed.unwrap_or(defaults.seed),
            };
            let tax = taxonomy(args.taxonomy.as_deref())?;
            report(&stage(pipeline::train(&args.input, &featurizer, &tax, &params, &args.out))?.1);
        }
        Command::Classify { input, model, sources: src, taxonomy: tax, out, threads } => {
            let tax = taxonomy(tax.as_deref())?;
            let list = sources(src.as_deref())?;
            report(&stage(pipeline::classify(&input, &model, &list, &tax, &out, threads))?.1);
        }
        Command::Evaluate { pred, taxonomy: tax, out, confusion, normalized_confusion } => {
            let tax = taxonomy(tax.as_deref())?;
            let (_, text, summary) =
                stage(pipeline::evaluate(&pred, &tax, &out, confusion.as_deref(), normalized_confusion.as_deref()))?;
            print!("{text}");
            report(&summary);
        }
        Command::Catalog(cmd) => run_catalog(cmd)?,
        Command::GenerateCorpus { spec, out, seed } => {
            let mut spec = corpus_spec(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let events = generate_corpus(&spec).map_err(|e| config_error(e.to_string()))?;
            let written = RawStore::new(&out).append(&events)?;
            println!("stage=generate-corpus status=ok written={written}");
        }
        Command::Demo { workdir, seed } => {
            let mut cfg = PipelineConfig::demo(workdir);
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            run_pipeline(&cfg)?;
        }
        Command::RunAll { config } => {
            let cfg = PipelineConfig::load(&config)?;
            run_pipeline(&cfg)?;
        }
    }
    Ok(())
}

fn run_pipeline(cfg: &PipelineConfig) -> Result<()> {
    let summary = pipeline::run_all(cfg, report)?;
    print!("{}", summary.report_text);
    println!("run status=ok elapsed_ms={} workdir={}", summary.elapsed_ms, cfg.workdir.display());
    Ok(())
}

fn run_catalog(cmd: CatalogCommand) -> Result<()> {
    match cmd {
        CatalogCommand::Build { events, pred, taxonomy: tax, out } => {
            let tax = taxonomy(tax.as_deref())?;
            let csv_out = (catalog_format_of(&out) == CatalogFormat::Csv).then(|| out.clone());
            if let Some(csv) = csv_out {
                let tmp = tempfile_path(&csv);
                let summary = stage(pipeline::build_catalog(&events, &pred, &tax, &tmp, Some(&csv)));
                let _ = std::fs::remove_file(&tmp);
                report(&summary?);
            } else {
                report(&stage(pipeline::build_catalog(&events, &pred, &tax, &out, None))?);
            }
        }
        CatalogCommand::Filter { input, taxonomy: tax, include, exclude, city, from, to, bbox, out } => {
            let tax = taxonomy(tax.as_deref())?;
            let query = CatalogQuery {
                include: resolve_names(&tax, &include)?,
                exclude: resolve_names(&tax, &exclude)?,
                city,
                bbox: bbox.as_deref().map(BoundingBox::parse).transpose().map_err(|e| config_error(e.to_string()))?,
                from: from.as_deref().map(|v| timestamp("from", v)).transpose()?,
                to: to.as_deref().map(|v| timestamp("to", v)).transpose()?,
            };
            query.validate(&tax).map_err(|e| config_error(e.to_string()))?;
            let entries = read_catalog(&input, &tax)?;
            let kept = catalog::filter(&entries, &query, &tax)?;
            write(&out, &catalog::export(&kept, catalog_format_of(&out)))?;
            println!("stage=catalog-filter status=ok read={} kept={}", entries.len(), kept.len());
        }
        CatalogCommand::Export { input, taxonomy: tax, format, out } => {
            let tax = taxonomy(tax.as_deref())?;
            let entries = read_catalog(&input, &tax)?;
            write(&out, &catalog::export(&entries, format))?;
            println!("stage=catalog-export status=ok entries={}", entries.len());
        }
    }
    Ok(())
}

fn tempfile_path(next_to: &Path) -> PathBuf {
    let mut name = next_to.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".jsonl.tmp");
    next_to.with_file_name(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if let Some(p) = e.downcast_ref::<PipelineError>() {
                p.exit_code()
            } else if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_STAGE
            };
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}
