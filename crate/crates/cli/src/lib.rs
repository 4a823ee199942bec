//! Command-line runner for the self-supported QA pipeline.

pub mod config;
pub mod filter;
pub mod io;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Once;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sqa_core::baselines::{rouge_evidence, tfidf_sentence, trivial_evidence, TrivialKind};
use sqa_core::decoder::{ConstrainedSampler, SampleConfig, TraceStep};
use sqa_core::docstore::{
    ingest, read_corpus, write_corpus, CorpusRecord, Document, HttpSearchProvider, LocalSearchProvider,
    SearchProvider, SiteFilter, UreqTransport,
};
use sqa_core::pipeline::{
    all_score_thresholds, answer, bootstrap_model, calibrate_threshold, coverage_quality_curve, fit_document,
    CoverageCurve, PipelineConfig, ScoredResponse, BOOTSTRAP_ORDER, BOOTSTRAP_SMOOTHING, DECLINE_STRING,
};
use sqa_core::preference::{
    fever_augment, majority_vote, score, ComparisonRecord, CopulaQuestion, FeverClaim, FeverKind,
    PreferenceScorer, Rating, TrainConfig, FEATURE_DIM,
};
use sqa_core::syntax::{parse_response, InlineEvidenceResponse};
use sqa_core::token_model::{NGramModel, TokenModel};

use crate::filter::{filter_dataset, FilterRules};
use crate::io::{read_jsonl, write_atomic, write_jsonl};

static INTERRUPTED: AtomicBool = AtomicBool::new(false);
static HANDLER: Once = Once::new();

#[derive(Debug, Parser)]
#[command(name = "sqa", version, about = "Self-supported question answering with verbatim quotes")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw corpus and align search snippets to bodies.
    Ingest(IngestArgs),
    /// Query a corpus or an external search engine.
    Search(SearchArgs),
    /// Train the bootstrap n-gram model on a corpus.
    TrainLm(TrainLmArgs),
    /// Draw constrained samples for one question.
    Sample(SampleArgs),
    /// Evidence-selection baselines.
    Baseline(BaselineArgs),
    /// Train the reward model on rated comparisons.
    TrainRm(TrainRmArgs),
    /// Score responses with a trained reward model.
    Score(ScoreArgs),
    /// Answer questions: retrieve, sample, rerank, decline.
    Answer(AnswerArgs),
    /// Coverage/quality curves for the decline threshold.
    Curves(CurvesArgs),
    /// Build synthetic comparisons from fact-verification claims.
    AugmentFever(FeverArgs),
    /// Filter an evaluation dataset.
    FilterDataset(FilterArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProviderKind {
    Local,
    Http,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, required_if_eq("provider", "local"))]
    corpus: Option<PathBuf>,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, value_enum, default_value_t = ProviderKind::Local)]
    provider: ProviderKind,
    /// Only results on this domain.
    #[arg(long, conflicts_with = "site_exclude")]
    site_restrict: Option<String>,
    /// No results on this domain.
    #[arg(long)]
    site_exclude: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = BOOTSTRAP_ORDER)]
    order: usize,
    #[arg(long, default_value_t = BOOTSTRAP_SMOOTHING)]
    smoothing: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    question: String,
    /// Document to quote from; defaults to the top search hit.
    #[arg(long)]
    doc: Option<String>,
    /// N-gram model file; defaults to a model bootstrapped from the corpus.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write per-step decoder traces as JSONL.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineKind {
    Random,
    First,
    Tfidf,
    Rouge,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainRmArgs {
    #[arg(long)]
    comparisons: PathBuf,
    /// Ratings JSONL joined to comparisons by question id.
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    rm: PathBuf,
    /// JSONL with `question` and `response` fields.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    /// JSONL with `id` and `question` fields.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ProviderKind::Local)]
    provider: ProviderKind,
    /// Reward model weights; without it every sample scores 0 and the first
    /// one is returned.
    #[arg(long)]
    rm: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, allow_negative_numbers = true)]
    decline_threshold: Option<f64>,
    #[arg(long, default_value = DECLINE_STRING)]
    decline_string: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// JSONL with `score` and `quality` fields.
    #[arg(long, conflicts_with_all = ["answers", "ratings"], required_unless_present = "answers")]
    items: Option<PathBuf>,
    /// Output of `answer`.
    #[arg(long, requires = "ratings")]
    answers: Option<PathBuf>,
    /// Per-answer ratings: `question_id`, `supported`, `plausible`.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Comma-separated thresholds; defaults to every distinct score.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    thresholds: Vec<f64>,
    /// Also report the threshold reaching this coverage.
    #[arg(long)]
    target_coverage: Option<f64>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeverKindArg {
    A,
    B,
    A2,
    B2,
}

#[derive(Debug, Args)]
pub struct FeverArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: FeverKindArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    require_url: bool,
    #[arg(long)]
    exclude_domain: Option<String>,
    /// One model-answer word count per line.
    #[arg(long)]
    length_reference: Option<PathBuf>,
    /// Training set JSONL for overlap removal.
    #[arg(long)]
    train: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit status: 0 on success, 2 on usage errors, 1 otherwise.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match config::expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    HANDLER.call_once(|| {
        let _ = ctrlc::set_handler(|| INTERRUPTED.store(true, Ordering::SeqCst));
    });
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Search(a) => cmd_search(a),
        Command::TrainLm(a) => cmd_train_lm(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::TrainRm(a) => cmd_train_rm(a),
        Command::Score(a) => cmd_score(a),
        Command::Answer(a) => cmd_answer(a),
        Command::Curves(a) => cmd_curves(a),
        Command::AugmentFever(a) => cmd_fever(a),
        Command::FilterDataset(a) => cmd_filter(a),
    }
}

fn load_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_corpus(BufReader::new(file))?)
}

fn load_model(path: Option<&Path>, docs: &[Document]) -> Result<NGramModel> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(NGramModel::read_from(BufReader::new(file))?)
        }
        None => Ok(bootstrap_model(docs, BOOTSTRAP_ORDER, BOOTSTRAP_SMOOTHING)),
    }
}

fn load_scorer(path: Option<&Path>) -> Result<PreferenceScorer> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(PreferenceScorer::read_json(BufReader::new(file))?)
        }
        None => Ok(PreferenceScorer::zeros(FEATURE_DIM)),
    }
}

fn provider(kind: ProviderKind, corpus: Option<&Path>) -> Result<Box<dyn SearchProvider>> {
    Ok(match kind {
        ProviderKind::Local => {
            let path = corpus.ok_or_else(|| anyhow!("--corpus is required with the local provider"))?;
            Box::new(LocalSearchProvider::from_records(&load_corpus(path)?))
        }
        ProviderKind::Http => Box::new(HttpSearchProvider::new(Box::new(UreqTransport::from_env()?))),
    })
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let report = ingest(load_corpus(&a.input)?)?;
    write_atomic(&a.output, |w| Ok(write_corpus(w, &report.kept)?))?;
    eprintln!(
        "kept {} documents, dropped {} with unmatched snippets",
        report.kept.len(),
        report.dropped_low_match.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct HitRecord<'a> {
    rank: usize,
    id: &'a str,
    title: &'a str,
    url: &'a str,
    score: f64,
    snippet: Option<&'a str>,
}

fn cmd_search(a: SearchArgs) -> Result<()> {
    let p = provider(a.provider, a.corpus.as_deref())?;
    let filter = match (a.site_restrict, a.site_exclude) {
        (Some(d), _) => Some(SiteFilter::Restrict(d)),
        (None, Some(d)) => Some(SiteFilter::Exclude(d)),
        (None, None) => None,
    };
    let hits = p.search(&a.query, a.k, filter.as_ref())?;
    let records: Vec<HitRecord> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| HitRecord {
            rank: i + 1,
            id: h.doc.id(),
            title: h.doc.title(),
            url: h.doc.url(),
            score: h.score,
            snippet: h.snippet.as_deref(),
        })
        .collect();
    match a.output {
        Some(path) => write_jsonl(&path, &records),
        None => {
            let mut out = std::io::stdout().lock();
            for r in &records {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
            Ok(())
        }
    }
}

fn cmd_train_lm(a: TrainLmArgs) -> Result<()> {
    if a.order == 0 {
        bail!("--order must be at least 1");
    }
    let docs: Vec<Document> = load_corpus(&a.corpus)?.iter().map(Document::from).collect();
    let model = bootstrap_model(&docs, a.order, a.smoothing);
    write_atomic(&a.output, |w| Ok(model.write_to(w)?))
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    index: usize,
    doc_id: &'a str,
    response: &'a InlineEvidenceResponse,
    log_prob: f64,
    attempts: usize,
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    sample: usize,
    #[serde(flatten)]
    step: &'a TraceStep,
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let records = load_corpus(&a.corpus)?;
    let docs: Vec<Document> = records.iter().map(Document::from).collect();
    let doc = match &a.doc {
        Some(id) => docs.iter().find(|d| d.id() == id).cloned().ok_or_else(|| anyhow!("no document `{id}`"))?,
        None => {
            let hits = LocalSearchProvider::from_records(&records).search(&a.question, 1, None)?;
            let hit = hits.into_iter().next().ok_or_else(|| anyhow!("corpus is empty"))?;
            fit_document(&a.question, &hit.doc, hit.snippet.as_deref())?
        }
    };
    let model = load_model(a.model.as_deref(), &docs)?;
    let config = SampleConfig {
        temperature: a.temperature,
        ..SampleConfig::default()
    };
    let sampler = ConstrainedSampler::new(&model, std::slice::from_ref(&doc), &a.question, config)?
        .with_trace(a.trace.is_some());
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut samples = Vec::with_capacity(a.n);
    for _ in 0..a.n {
        samples.push(sampler.sample(&mut rng)?);
    }
    let out: Vec<SampleRecord> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| SampleRecord {
            index: i,
            doc_id: doc.id(),
            response: &s.response,
            log_prob: s.log_prob(),
            attempts: s.attempts,
        })
        .collect();
    write_jsonl(&a.output, &out)?;
    if let Some(path) = &a.trace {
        let steps: Vec<TraceRecord> = samples
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.trace.iter().map(move |step| TraceRecord { sample: i, step }))
            .collect();
        write_jsonl(path, &steps)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct QuestionRecord {
    #[serde(alias = "question_id")]
    id: String,
    question: String,
    /// Reference answer, used by the TF-IDF and ROUGE baselines.
    #[serde(default)]
    answer: Option<String>,
}

#[derive(Serialize)]
struct BaselineRecord {
    question_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    doc_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<InlineEvidenceResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_baseline(a: BaselineArgs) -> Result<()> {
    let questions: Vec<QuestionRecord> = read_jsonl(&a.questions)?;
    let provider = LocalSearchProvider::from_records(&load_corpus(&a.corpus)?);
    let mut out = Vec::with_capacity(questions.len());
    for (i, q) in questions.iter().enumerate() {
        let mut rng = question_rng(a.seed, i);
        let result = (|| -> Result<(String, InlineEvidenceResponse)> {
            let hits = provider.search(&q.question, a.k, None)?;
            let docs: Vec<Document> = hits.into_iter().map(|h| h.doc).collect();
            let top = docs.first().ok_or_else(|| anyhow!("no documents retrieved"))?;
            let reference = q.answer.as_deref();
            let (doc, quote) = match a.kind {
                BaselineKind::First => (top, trivial_evidence(top, TrivialKind::First, &mut rng)?.text),
                BaselineKind::Random => (top, trivial_evidence(top, TrivialKind::Random, &mut rng)?.text),
                BaselineKind::Tfidf => (top, tfidf_sentence(top, &q.question, reference.unwrap_or(""))?.text),
                BaselineKind::Rouge => {
                    let answer = reference.ok_or_else(|| anyhow!("the rouge baseline needs an `answer` field"))?;
                    let ev = rouge_evidence(answer, &docs)?;
                    (&docs[ev.doc_index], ev.text)
                }
            };
            let claim = reference.unwrap_or(&quote).to_owned();
            Ok((doc.id().to_owned(), InlineEvidenceResponse::new(claim, doc.title(), quote)?))
        })();
        out.push(match result {
            Ok((doc_id, response)) => BaselineRecord {
                question_id: q.id.clone(),
                doc_id: Some(doc_id),
                response: Some(response),
                error: None,
            },
            Err(e) => BaselineRecord {
                question_id: q.id.clone(),
                doc_id: None,
                response: None,
                error: Some(format!("{e:#}")),
            },
        });
    }
    write_jsonl(&a.output, &out)
}

fn cmd_train_rm(a: TrainRmArgs) -> Result<()> {
    let mut records: Vec<ComparisonRecord> = read_jsonl(&a.comparisons)?;
    if let Some(path) = &a.ratings {
        let ratings: Vec<Rating> = read_jsonl(path)?;
        for r in ratings {
            let rec = records
                .iter_mut()
                .find(|c| c.question_id == r.question_id)
                .ok_or_else(|| anyhow!("rating for unknown question `{}`", r.question_id))?;
            rec.ratings.push(r);
        }
    }
    let config = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    let scorer = sqa_core::preference::train_pairwise(&records, &config)?;
    write_atomic(&a.output, |w| Ok(scorer.write_json(w)?))
}

fn cmd_score(a: ScoreArgs) -> Result<()> {
    let scorer = load_scorer(Some(&a.rm))?;
    let records: Vec<Value> = read_jsonl(&a.input)?;
    let mut out = Vec::with_capacity(records.len());
    for (i, mut rec) in records.into_iter().enumerate() {
        let question = rec
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("record {}: missing `question`", i + 1))?
            .to_owned();
        let raw = rec
            .get("response")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("record {}: missing `response`", i + 1))?;
        let resp = parse_response(raw)
            .responses
            .into_iter()
            .next()
            .ok_or_else(|| anyhow!("record {}: response does not parse", i + 1))?;
        rec["score"] = score(&scorer, &question, &resp).into();
        rec["aux_probability"] = scorer.aux_probability(&question, &resp).into();
        out.push(rec);
    }
    write_jsonl(&a.output, &out)
}

/// Independent stream per question so results do not depend on scheduling.
pub fn question_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Serialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub question: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub result: Option<ScoredResponse>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn cmd_answer(a: AnswerArgs) -> Result<()> {
    let questions: Vec<QuestionRecord> = read_jsonl(&a.questions)?;
    let search = provider(a.provider, a.corpus.as_deref())?;
    let corpus_docs: Vec<Document> = match &a.corpus {
        Some(p) => load_corpus(p)?.iter().map(Document::from).collect(),
        None => Vec::new(),
    };
    if a.model.is_none() && corpus_docs.is_empty() {
        bail!("--model is required when there is no local corpus to bootstrap from");
    }
    let model = load_model(a.model.as_deref(), &corpus_docs)?;
    let scorer = load_scorer(a.rm.as_deref())?;
    let config = PipelineConfig {
        k_docs: a.k,
        n_samples: a.n,
        temperature: a.temperature,
        decline_threshold: a.decline_threshold,
        decline_string: a.decline_string.clone(),
        ..PipelineConfig::default()
    };
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.workers.max(1))
        .build()
        .context("starting worker pool")?;
    let model: &dyn TokenModel = &model;
    let results: Vec<Option<AnswerRecord>> = pool.install(|| {
        questions
            .par_iter()
            .enumerate()
            .map(|(i, q)| {
                if INTERRUPTED.load(Ordering::SeqCst) {
                    return None;
                }
                let mut rng = question_rng(a.seed, i);
                let r = answer(&q.question, model, search.as_ref(), &scorer, &config, &mut rng);
                Some(AnswerRecord {
                    question_id: q.id.clone(),
                    question: q.question.clone(),
                    error: r.as_ref().err().map(|e| e.to_string()),
                    result: r.ok(),
                })
            })
            .collect()
    });
    if INTERRUPTED.load(Ordering::SeqCst) || results.iter().any(Option::is_none) {
        bail!("interrupted; no output written");
    }
    let records: Vec<AnswerRecord> = results.into_iter().flatten().collect();
    write_jsonl(&a.output, &records)
}

#[derive(Debug, Deserialize)]
struct CurveItem {
    score: f64,
    quality: bool,
}

#[derive(Debug, Deserialize)]
struct QualityRating {
    question_id: String,
    supported: bool,
    plausible: bool,
}

/// Pairs each answered question's score with its majority-voted
/// supported-and-plausible label.
fn curve_items_from_ratings(answers: &[Value], ratings: &[QualityRating]) -> Result<Vec<(f64, bool)>> {
    let mut items = Vec::new();
    for (i, ans) in answers.iter().enumerate() {
        if ans.get("error").is_some() {
            continue;
        }
        let id = ans
            .get("question_id")
            .and_then(Value::as_str)
            .ok_or_else(|| anyhow!("answer {}: missing `question_id`", i + 1))?;
        let score = ans
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| anyhow!("answer {}: missing `score`", i + 1))?;
        let mine: Vec<&QualityRating> = ratings.iter().filter(|r| r.question_id == id).collect();
        if mine.is_empty() {
            bail!("no ratings for question `{id}`");
        }
        let s: Vec<bool> = mine.iter().map(|r| r.supported).collect();
        let p: Vec<bool> = mine.iter().map(|r| r.plausible).collect();
        items.push((score, majority_vote(&s)? && majority_vote(&p)?));
    }
    Ok(items)
}

pub fn render_curve_csv(curve: &CoverageCurve) -> String {
    let mut s = String::from("threshold,coverage,quality\n");
    for p in &curve.points {
        s.push_str(&format!("{},{},{}\n", p.threshold, p.coverage, p.quality));
    }
    s
}

pub fn render_summary(curve: &CoverageCurve) -> String {
    let mut s = format!("{:>12}  {:>8}  {:>8}\n", "threshold", "coverage", "quality");
    for p in &curve.points {
        s.push_str(&format!("{:>12.4}  {:>8.4}  {:>8.4}\n", p.threshold, p.coverage, p.quality));
    }
    s
}

fn cmd_curves(a: CurvesArgs) -> Result<()> {
    let items: Vec<(f64, bool)> = match (&a.items, &a.answers, &a.ratings) {
        (Some(path), _, _) => read_jsonl::<CurveItem>(path)?.into_iter().map(|i| (i.score, i.quality)).collect(),
        (None, Some(ans), Some(rat)) => curve_items_from_ratings(&read_jsonl(ans)?, &read_jsonl(rat)?)?,
        _ => bail!("either --items or --answers with --ratings is required"),
    };
    let thresholds = if a.thresholds.is_empty() {
        all_score_thresholds(&items)
    } else {
        a.thresholds.clone()
    };
    let curve = coverage_quality_curve(&items, &thresholds)?;
    match a.format {
        ReportFormat::Csv => write_atomic(&a.output, |w| Ok(w.write_all(render_curve_csv(&curve).as_bytes())?))?,
        ReportFormat::Jsonl => write_jsonl(&a.output, &curve.points)?,
    }
    print!("{}", render_summary(&curve));
    if let Some(target) = a.target_coverage {
        let t = calibrate_threshold(&items, target)?;
        println!("threshold for coverage {target}: {t}");
    }
    Ok(())
}

fn cmd_fever(a: FeverArgs) -> Result<()> {
    let claims: Vec<FeverClaim> = read_jsonl(&a.input)?;
    let kind = match a.kind {
        FeverKindArg::A => FeverKind::A,
        FeverKindArg::B => FeverKind::B,
        FeverKindArg::A2 => FeverKind::A2,
        FeverKindArg::B2 => FeverKind::B2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let records = fever_augment(&claims, kind, &CopulaQuestion, &mut rng)?;
    write_jsonl(&a.output, &records)
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let records: Vec<Value> = read_jsonl(&a.input)?;
    let length_reference = match &a.length_reference {
        Some(p) => Some(
            std::fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().parse::<f64>().with_context(|| format!("bad length `{l}`")))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let rules = FilterRules {
        require_url: a.require_url,
        exclude_domain: a.exclude_domain,
        length_reference,
        train: match &a.train {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        },
    };
    let report = filter_dataset(records, &rules)?;
    eprintln!(
        "kept {}; dropped {} without URL, {} out of length window, {} overlapping training data",
        report.kept.len(),
        report.no_url,
        report.out_of_length,
        report.overlap
    );
    write_jsonl(&a.output, &report.kept)
}
