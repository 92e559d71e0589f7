//! Stage functions and the end-to-end run. Stages exchange data only
//! through the files named in [`ArtifactPaths`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, CatalogFormat};
use crate::classifier::{fit_model, Cascade, ClassifierModel, Featurizer, FeaturizerConfig, Prediction, TrainParams};
use crate::corpus::{generate_corpus, SyntheticCorpusSpec};
use crate::encoder::{EncoderConfig, EncoderModel};
use crate::evaluation::{self, EvalReport};
use crate::ingestion::{dedupe, ingest_sources, load_sources, RawStore, SourceDescriptor, SourceIndex};
use crate::jsonl;
use crate::taxonomy::Taxonomy;
use crate::textprep::{prepare_event, CleanEvent, Vocabulary, DEFAULT_MAX_CHARS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

/// Prefix of the environment variables that override configured paths.
pub const ENV_PREFIX: &str = "EVENTCAT_";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {index} ({stage}) failed: {message}")]
    Stage { index: usize, stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Stage { .. } => EXIT_STAGE,
        }
    }
}

pub type StageResult<T> = Result<T, String>;

fn io_err(path: &Path, e: impl fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Named counts reported by one stage, printed as `stage=<name> key=value ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub counts: Vec<(String, String)>,
}

impl StageSummary {
    fn new(stage: &'static str) -> Self {
        StageSummary { stage, counts: Vec::new() }
    }

    fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.counts.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.counts.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for StageSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage={} status=ok", self.stage)?;
        for (k, v) in &self.counts {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// Files produced by the stages, relative to the work directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPaths {
    pub raw: PathBuf,
    pub clean: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub vocab: PathBuf,
    pub model: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    pub confusion: PathBuf,
    pub normalized_confusion: PathBuf,
    pub catalog: PathBuf,
    pub catalog_csv: PathBuf,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        ArtifactPaths {
            raw: "raw.jsonl".into(),
            clean: "clean.jsonl".into(),
            train: "train.jsonl".into(),
            test: "test.jsonl".into(),
            vocab: "vocab.txt".into(),
            model: "model.json".into(),
            predictions: "predictions.jsonl".into(),
            report: "report.txt".into(),
            confusion: "confusion.csv".into(),
            normalized_confusion: "confusion_normalized.csv".into(),
            catalog: "catalog.jsonl".into(),
            catalog_csv: "catalog.csv".into(),
        }
    }
}

impl ArtifactPaths {
    fn fields_mut(&mut self) -> [(&'static str, &mut PathBuf); 12] {
        [
            ("RAW", &mut self.raw),
            ("CLEAN", &mut self.clean),
            ("TRAIN", &mut self.train),
            ("TEST", &mut self.test),
            ("VOCAB", &mut self.vocab),
            ("MODEL", &mut self.model),
            ("PREDICTIONS", &mut self.predictions),
            ("REPORT", &mut self.report),
            ("CONFUSION", &mut self.confusion),
            ("NORMALIZED_CONFUSION", &mut self.normalized_confusion),
            ("CATALOG", &mut self.catalog),
            ("CATALOG_CSV", &mut self.catalog_csv),
        ]
    }
}

/// Architecture of the encoder created when an `encoder-cls` featurizer
/// points at a weight file that does not exist yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        let d = EncoderConfig::desk_scale(0, 0);
        EncoderSettings {
            num_layers: d.num_layers,
            model_dim: d.model_dim,
            num_heads: d.num_heads,
            ffn_dim: d.ffn_dim,
            max_len: d.max_len,
        }
    }
}

impl EncoderSettings {
    pub fn config(&self, vocab_size: usize, seed: u64) -> EncoderConfig {
        EncoderConfig {
            num_layers: self.num_layers,
            model_dim: self.model_dim,
            num_heads: self.num_heads,
            ffn_dim: self.ffn_dim,
            max_len: self.max_len,
            vocab_size,
            seed,
        }
    }
}

/// The run configuration, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Taxonomy file; the bundled seven-category taxonomy when absent.
    pub taxonomy: Option<PathBuf>,
    /// Source descriptor file.
    pub sources: Option<PathBuf>,
    /// Synthetic corpus spec file, or `"bundled"`.
    pub corpus: Option<String>,
    pub workdir: PathBuf,
    pub paths: ArtifactPaths,
    pub featurizer: FeaturizerConfig,
    pub encoder: EncoderSettings,
    pub training: TrainParams,
    pub test_fraction: f64,
    pub stratified: bool,
    /// Overrides the seed of the corpus, split, encoder and training.
    pub seed: u64,
    pub max_chars: usize,
    pub vocab_size: usize,
    pub min_freq: usize,
    pub threads: usize,
    /// Base of the `fetched_at` stamps given to ingested events.
    pub fetched_at: DateTime<Utc>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            taxonomy: None,
            sources: None,
            corpus: None,
            workdir: ".".into(),
            paths: ArtifactPaths::default(),
            featurizer: FeaturizerConfig::hashed(4096, 0),
            encoder: EncoderSettings::default(),
            training: TrainParams::default(),
            test_fraction: 0.2,
            stratified: true,
            seed: 7,
            max_chars: DEFAULT_MAX_CHARS,
            vocab_size: 20_000,
            min_freq: 1,
            threads: 4,
            fetched_at: DateTime::UNIX_EPOCH,
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Configuration for the bundled synthetic demo, writing into `workdir`.
    pub fn demo(workdir: impl Into<PathBuf>) -> Self {
        let mut cfg = PipelineConfig { corpus: Some("bundled".into()), workdir: workdir.into(), ..Default::default() };
        cfg.resolve_paths(Path::new("."));
        cfg
    }

    /// Reads a config file, applies environment overrides and resolves
    /// relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(io_err(path, e)))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(io_err(path, e)))?;
        cfg.apply_env(|k| std::env::var(k).ok());
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces paths from `EVENTCAT_TAXONOMY`, `EVENTCAT_SOURCES`,
    /// `EVENTCAT_CORPUS`, `EVENTCAT_WORKDIR` and `EVENTCAT_<ARTIFACT>`
    /// (for example `EVENTCAT_MODEL`). Non-path settings are never overridden.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let var = |name: &str| lookup(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        if let Some(v) = var("TAXONOMY") {
            self.taxonomy = Some(v.into());
        }
        if let Some(v) = var("SOURCES") {
            self.sources = Some(v.into());
        }
        if let Some(v) = var("CORPUS") {
            self.corpus = Some(v);
        }
        if let Some(v) = var("WORKDIR") {
            self.workdir = v.into();
        }
        for (name, field) in self.paths.fields_mut() {
            if let Some(v) = var(name) {
                *field = v.into();
            }
        }
    }

    /// Makes every path absolute: inputs and the work directory against
    /// `base`, artifacts against the work directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        self.taxonomy = self.taxonomy.as_deref().map(|p| resolve(base, p));
        self.sources = self.sources.as_deref().map(|p| resolve(base, p));
        if let Some(c) = &self.corpus {
            if c != "bundled" {
                self.corpus = Some(resolve(base, Path::new(c)).display().to_string());
            }
        }
        self.workdir = resolve(base, &self.workdir);
        let workdir = self.workdir.clone();
        for (_, field) in self.paths.fields_mut() {
            *field = resolve(&workdir, field);
        }
        if let FeaturizerConfig::EncoderCls { weights } = &mut self.featurizer {
            *weights = resolve(&workdir, weights);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(PipelineError::Config(format!("test_fraction {} must lie in (0, 1)", self.test_fraction)));
        }
        if self.sources.is_none() && self.corpus.is_none() {
            return Err(PipelineError::Config("neither `sources` nor `corpus` is configured".into()));
        }
        if self.threads == 0 {
            return Err(PipelineError::Config("threads must be at least 1".into()));
        }
        self.featurizer.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams { seed: self.seed, ..self.training.clone() }
    }
}

pub fn load_taxonomy(path: Option<&Path>) -> StageResult<Taxonomy> {
    match path {
        None => Ok(Taxonomy::default_taxonomy()),
        Some(p) if !p.exists() => Err(format!(
            "taxonomy file {} not found; fix `taxonomy` in the config or set {ENV_PREFIX}TAXONOMY",
            p.display()
        )),
        Some(p) => Taxonomy::load_file(p).map_err(|e| io_err(p, e)),
    }
}

/// Fetches `sources`, appends the synthetic corpus if given, drops
/// duplicates and appends the result to the raw store.
pub fn ingest(
    sources: &[SourceDescriptor],
    corpus: Option<&SyntheticCorpusSpec>,
    raw: &Path,
    threads: usize,
    base: DateTime<Utc>,
) -> StageResult<StageSummary> {
    let report = ingest_sources(sources, threads, base);
    let mut events = report.events;
    let failed = report.sources.iter().filter(|s| s.error.is_some()).count();
    let skipped: usize = report.sources.iter().map(|s| s.skipped).sum();
    for s in &report.sources {
        if let Some(err) = &s.error {
            eprintln!("warning: source {} skipped: {err}", s.source_id);
        }
    }
    let mut generated = 0;
    if let Some(spec) = corpus {
        let synthetic = generate_corpus(spec).map_err(|e| e.to_string())?;
        generated = synthetic.len();
        let offset = events.len() as i64;
        events.extend(synthetic.into_iter().enumerate().map(|(i, mut e)| {
            e.fetched_at = base + chrono::Duration::milliseconds(offset + i as i64);
            e
        }));
    }
    let before = events.len();
    let events = dedupe(events);
    let duplicates = report.duplicates + before - events.len();
    let written = RawStore::new(raw).append(&events).map_err(|e| e.to_string())?;
    Ok(StageSummary::new("ingest")
        .with("sources", sources.len())
        .with("failed_sources", failed)
        .with("synthetic", generated)
        .with("skipped_items", skipped)
        .with("duplicates", duplicates)
        .with("written", written))
}

/// Cleans every raw event into the clean store, replacing its contents.
pub fn clean(raw: &Path, clean_out: &Path, max_chars: usize) -> StageResult<StageSummary> {
    let outcome = RawStore::new(raw).read(None).map_err(|e| e.to_string())?;
    for bad in &outcome.skipped {
        eprintln!("warning: {}: {bad}", raw.display());
    }
    let read = outcome.records.len();
    let unique = dedupe(outcome.records);
    let cleaned: Vec<CleanEvent> = unique.iter().filter_map(|e| prepare_event(e, max_chars)).collect();
    jsonl::write_file(clean_out, &cleaned).map_err(|e| io_err(clean_out, e))?;
    Ok(StageSummary::new("clean")
        .with("read", read)
        .with("corrupt_lines", outcome.skipped.len())
        .with("duplicates", read - unique.len())
        .with("empty_text", unique.len() - cleaned.len())
        .with("written", cleaned.len()))
}

pub fn read_clean(path: &Path) -> StageResult<Vec<CleanEvent>> {
    let outcome = jsonl::read_file::<CleanEvent>(path).map_err(|e| io_err(path, e))?;
    if let Some(bad) = outcome.skipped.first() {
        return Err(format!("{}: {bad}", path.display()));
    }
    Ok(outcome.records)
}

pub fn read_predictions(path: &Path) -> StageResult<Vec<Prediction>> {
    let outcome = jsonl::read_file::<Prediction>(path).map_err(|e| io_err(path, e))?;
    if let Some(bad) = outcome.skipped.first() {
        return Err(format!("{}: {bad}", path.display()));
    }
    Ok(outcome.records)
}

/// Builds the vocabulary from the text of the events in `clean_in`.
pub fn vocab(clean_in: &Path, out: &Path, max_size: usize, min_freq: usize) -> StageResult<(Vocabulary, StageSummary)> {
    let events = read_clean(clean_in)?;
    let texts: Vec<&str> = events.iter().map(|e| e.text.as_str()).collect();
    let vocab = Vocabulary::build(&texts, max_size, min_freq).map_err(|e| e.to_string())?;
    vocab.save(out).map_err(|e| io_err(out, e))?;
    let summary = StageSummary::new("vocab").with("documents", texts.len()).with("size", vocab.len());
    Ok((vocab, summary))
}

/// Writes a freshly initialized encoder over `vocab`.
pub fn init_encoder(
    vocab: &Vocabulary,
    settings: &EncoderSettings,
    seed: u64,
    out: &Path,
) -> StageResult<StageSummary> {
    let model = EncoderModel::initialize(settings.config(vocab.len(), seed), vocab).map_err(|e| e.to_string())?;
    model.save(out).map_err(|e| e.to_string())?;
    Ok(StageSummary::new("init-encoder")
        .with("layers", settings.num_layers)
        .with("model_dim", settings.model_dim)
        .with("vocab_size", vocab.len()))
}

/// One encoded event in the feature store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub index: usize,
    pub source_id: String,
    pub external_id: Option<String>,
    pub label: Option<crate::taxonomy::CategoryId>,
    pub features: Vec<f64>,
}

/// Writes the CLS vector of every clean event. The vocabulary embedded in
/// the weight file is used unless `vocab_override` is given.
pub fn encode(clean_in: &Path, weights: &Path, vocab_override: Option<&Path>, out: &Path) -> StageResult<StageSummary> {
    let events = read_clean(clean_in)?;
    let model = EncoderModel::load(weights).map_err(|e| e.to_string())?;
    let vocab = match vocab_override {
        Some(p) => Vocabulary::load(p).map_err(|e| io_err(p, e))?,
        None => model.vocabulary().map_err(|e| e.to_string())?,
    };
    let mut records = Vec::with_capacity(events.len());
    for (index, e) in events.iter().enumerate() {
        let features = model.encode_text(&e.text, &vocab).map_err(|err| format!("event {index}: {err}"))?;
        records.push(FeatureRecord {
            index,
            source_id: e.source_id.clone(),
            external_id: e.external_id.clone(),
            label: e.label,
            features,
        });
    }
    jsonl::write_file(out, &records).map_err(|e| io_err(out, e))?;
    Ok(StageSummary::new("encode").with("events", records.len()).with("dim", model.config.model_dim))
}

/// Splits labeled clean events into train and test stores. Unlabeled
/// events go to the test store so that they are classified and catalogued.
pub fn split(
    clean_in: &Path,
    train_out: &Path,
    test_out: &Path,
    fraction: f64,
    seed: u64,
    stratified: bool,
) -> StageResult<StageSummary> {
    let events = read_clean(clean_in)?;
    let (labeled, unlabeled): (Vec<CleanEvent>, Vec<CleanEvent>) = events.into_iter().partition(|e| e.label.is_some());
    let (train, mut test) =
        evaluation::split(&labeled, |e| e.label.unwrap(), fraction, seed, stratified).map_err(|e| e.to_string())?;
    let held_out = test.len();
    test.extend(unlabeled);
    jsonl::write_file(train_out, &train).map_err(|e| io_err(train_out, e))?;
    jsonl::write_file(test_out, &test).map_err(|e| io_err(test_out, e))?;
    Ok(StageSummary::new("split")
        .with("train", train.len())
        .with("test", held_out)
        .with("unlabeled", test.len() - held_out))
}

pub fn train(
    train_in: &Path,
    featurizer: &FeaturizerConfig,
    taxonomy: &Taxonomy,
    params: &TrainParams,
    model_out: &Path,
) -> StageResult<(ClassifierModel, StageSummary)> {
    let events = read_clean(train_in)?;
    let model = fit_model(&events, featurizer, taxonomy, params).map_err(|e| e.to_string())?;
    model.save(model_out).map_err(|e| e.to_string())?;
    let summary = StageSummary::new("train")
        .with("examples", model.head.meta.examples)
        .with("classes", model.classes().len())
        .with("branches", model.branches.len())
        .with("final_loss", format!("{:.6}", model.head.meta.final_loss));
    Ok((model, summary))
}

/// Runs the cascade over `events_in` and writes one prediction per event.
pub fn classify(
    events_in: &Path,
    model_path: &Path,
    sources: &[SourceDescriptor],
    taxonomy: &Taxonomy,
    out: &Path,
    threads: usize,
) -> StageResult<(Vec<Prediction>, StageSummary)> {
    let events = read_clean(events_in)?;
    let model = ClassifierModel::load(model_path).map_err(|e| e.to_string())?;
    let featurizer = Featurizer::from_config(&model.featurizer).map_err(|e| e.to_string())?;
    let index = SourceIndex::new(sources, taxonomy).map_err(|e| e.to_string())?;
    let cascade = Cascade::new(&index, &model, &featurizer);
    let predictions = cascade.classify_all(&events, threads).map_err(|e| e.to_string())?;
    jsonl::write_file(out, &predictions).map_err(|e| io_err(out, e))?;
    let mut by_method: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &predictions {
        *by_method.entry(p.method.as_str()).or_default() += 1;
    }
    let mut summary = StageSummary::new("classify").with("events", predictions.len());
    for m in ["rule-source", "rule-venue", "model"] {
        summary = summary.with(m, by_method.get(m).copied().unwrap_or(0));
    }
    Ok((predictions, summary))
}

/// Scores the labeled predictions and writes the report and confusion CSVs.
pub fn evaluate(
    predictions_in: &Path,
    taxonomy: &Taxonomy,
    report_out: &Path,
    confusion_out: Option<&Path>,
    normalized_out: Option<&Path>,
) -> StageResult<(EvalReport, String, StageSummary)> {
    let predictions = read_predictions(predictions_in)?;
    let labeled: Vec<Prediction> = predictions.iter().filter(|p| p.actual.is_some()).cloned().collect();
    let m = evaluation::confusion(&labeled, taxonomy).map_err(|e| e.to_string())?;
    let report = evaluation::evaluate(&m);
    let text = evaluation::render_report(&report, taxonomy);
    std::fs::write(report_out, &text).map_err(|e| io_err(report_out, e))?;
    if let Some(p) = confusion_out {
        std::fs::write(p, evaluation::confusion_csv(&m, taxonomy, false)).map_err(|e| io_err(p, e))?;
    }
    if let Some(p) = normalized_out {
        std::fs::write(p, evaluation::confusion_csv(&m, taxonomy, true)).map_err(|e| io_err(p, e))?;
    }
    let summary = StageSummary::new("evaluate")
        .with("evaluated", labeled.len())
        .with("unlabeled", predictions.len() - labeled.len())
        .with("accuracy", format!("{:.4}", report.accuracy))
        .with("macro_f1", format!("{:.4}", report.macro_avg.f1));
    Ok((report, text, summary))
}

/// Builds the catalog from events and their predictions and writes it as
/// JSONL, plus CSV when `csv_out` is given.
pub fn build_catalog(
    events_in: &Path,
    predictions_in: &Path,
    taxonomy: &Taxonomy,
    out: &Path,
    csv_out: Option<&Path>,
) -> StageResult<StageSummary> {
    let events = read_clean(events_in)?;
    let predictions = read_predictions(predictions_in)?;
    let entries = catalog::build_catalog(&events, &predictions, taxonomy).map_err(|e| e.to_string())?;
    std::fs::write(out, catalog::export(&entries, CatalogFormat::Jsonl)).map_err(|e| io_err(out, e))?;
    if let Some(p) = csv_out {
        std::fs::write(p, catalog::export(&entries, CatalogFormat::Csv)).map_err(|e| io_err(p, e))?;
    }
    Ok(StageSummary::new("catalog").with("entries", entries.len()))
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stages: Vec<StageSummary>,
    pub report: EvalReport,
    pub report_text: String,
    pub elapsed_ms: u128,
}

const STAGES: [&str; 9] = ["taxonomy", "ingest", "clean", "vocab", "split", "train", "classify", "evaluate", "catalog"];

/// Runs every stage in order, starting from an empty raw store. Each
/// finished stage is passed to `on_stage` as soon as it completes.
pub fn run_all(config: &PipelineConfig, mut on_stage: impl FnMut(&StageSummary)) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let start = Instant::now();
    let fail = |index: usize| move |message: String| PipelineError::Stage { index, stage: STAGES[index], message };
    let mut stages = Vec::new();
    let mut done = |s: StageSummary, stages: &mut Vec<StageSummary>| {
        on_stage(&s);
        stages.push(s);
    };
    let p = &config.paths;

    let taxonomy = load_taxonomy(config.taxonomy.as_deref()).map_err(fail(0))?;
    let sources = match &config.sources {
        Some(path) => load_sources(path).map_err(|e| e.to_string()).map_err(fail(0))?,
        None => Vec::new(),
    };
    SourceIndex::new(&sources, &taxonomy).map_err(|e| e.to_string()).map_err(fail(0))?;
    let corpus = match config.corpus.as_deref() {
        None => None,
        Some("bundled") => Some(SyntheticCorpusSpec::bundled()),
        Some(path) => Some(SyntheticCorpusSpec::load(Path::new(path)).map_err(|e| e.to_string()).map_err(fail(0))?),
    }
    .map(|spec| SyntheticCorpusSpec { seed: config.seed, ..spec });
    std::fs::create_dir_all(&config.workdir).map_err(|e| io_err(&config.workdir, e)).map_err(fail(0))?;
    done(StageSummary::new("taxonomy").with("categories", taxonomy.len()).with("sources", sources.len()), &mut stages);

    if p.raw.exists() {
        std::fs::remove_file(&p.raw).map_err(|e| io_err(&p.raw, e)).map_err(fail(1))?;
    }
    done(ingest(&sources, corpus.as_ref(), &p.raw, config.threads, config.fetched_at).map_err(fail(1))?, &mut stages);
    done(clean(&p.raw, &p.clean, config.max_chars).map_err(fail(2))?, &mut stages);

    let (vocabulary, summary) = vocab(&p.clean, &p.vocab, config.vocab_size, config.min_freq).map_err(fail(3))?;
    done(summary, &mut stages);
    if let FeaturizerConfig::EncoderCls { weights } = &config.featurizer {
        if !weights.exists() {
            done(init_encoder(&vocabulary, &config.encoder, config.seed, weights).map_err(fail(3))?, &mut stages);
        }
    }

    done(
        split(&p.clean, &p.train, &p.test, config.test_fraction, config.seed, config.stratified).map_err(fail(4))?,
        &mut stages,
    );
    let (_, summary) =
        train(&p.train, &config.featurizer, &taxonomy, &config.train_params(), &p.model).map_err(fail(5))?;
    done(summary, &mut stages);
    let (_, summary) =
        classify(&p.test, &p.model, &sources, &taxonomy, &p.predictions, config.threads).map_err(fail(6))?;
    done(summary, &mut stages);
    let (report, report_text, summary) =
        evaluate(&p.predictions, &taxonomy, &p.report, Some(&p.confusion), Some(&p.normalized_confusion))
            .map_err(fail(7))?;
    done(summary, &mut stages);
    done(
        build_catalog(&p.test, &p.predictions, &taxonomy, &p.catalog, Some(&p.catalog_csv)).map_err(fail(8))?,
        &mut stages,
    );

    Ok(RunSummary { stages, report, report_text, elapsed_ms: start.elapsed().as_millis() })
}
