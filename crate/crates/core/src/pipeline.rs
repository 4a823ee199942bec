//! Retrieve, sample round-robin over the retrieved pages, rerank by reward,
//! and optionally decline; plus coverage/quality curves for picking the
//! decline threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{ConstrainedSampler, DecodeError, SampleConfig};
use crate::docstore::{
    fuzzy_match_snippet, prompt_overhead, sentence_starts, truncate_around, DocstoreError, Document,
    SearchProvider, TruncateMode, MAX_RESULTS,
};
use crate::preference::RewardModel;
use crate::syntax::InlineEvidenceResponse;
use crate::token_model::{train_ngram, NGramModel, TokenModel};
use crate::tokenizer::{Tokenizer, PROMPT_BUDGET, SAMPLE_BUDGET};

pub const DECLINE_STRING: &str = "I don't know";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("search returned no documents")]
    RetrievalEmpty,
    #[error("all {0} samples dead-ended")]
    AllSamplesDeadEnded(usize),
    #[error("no items to build a curve from")]
    EmptyItems,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Docstore(#[from] DocstoreError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Documents retrieved per question, at most ten.
    pub k_docs: usize,
    pub n_samples: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub max_retries: usize,
    pub decline_threshold: Option<f64>,
    pub decline_string: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_docs: MAX_RESULTS,
            n_samples: 16,
            temperature: 1.0,
            max_tokens: SAMPLE_BUDGET,
            max_retries: 3,
            decline_threshold: None,
            decline_string: DECLINE_STRING.to_owned(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_docs == 0 || self.k_docs > MAX_RESULTS {
            return Err(PipelineError::InvalidConfig(format!("k_docs must be in 1..={MAX_RESULTS}")));
        }
        if self.n_samples == 0 {
            return Err(PipelineError::InvalidConfig("n_samples must be positive".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(PipelineError::InvalidConfig("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub response: InlineEvidenceResponse,
    pub score: f64,
    pub source_doc_id: String,
    pub source_url: String,
    pub sample_index: usize,
    pub declined: bool,
    /// What the user sees: the raw response, or the decline string.
    pub output: String,
}

/// One reranking candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub sample_index: usize,
    pub doc_index: usize,
    pub response: InlineEvidenceResponse,
    pub score: f64,
}

/// Cuts a retrieved page to fit a single-document prompt, keeping the
/// snippet when it aligns.
pub fn fit_document(question: &str, doc: &Document, snippet: Option<&str>) -> Result<Document, DocstoreError> {
    let budget = PROMPT_BUDGET.saturating_sub(prompt_overhead(question, std::iter::once(doc.title())));
    if doc.tokens().len() <= budget {
        return Ok(doc.clone());
    }
    let required = snippet
        .and_then(|s| fuzzy_match_snippet(doc, s).span)
        .unwrap_or_else(|| {
            let s = sentence_starts(doc.body()).first().copied().unwrap_or(0);
            s..s
        });
    // Infer mode never draws from the rng.
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    match truncate_around(doc, required, budget, TruncateMode::Infer, &mut rng) {
        Ok(d) => Ok(d),
        Err(DocstoreError::SpanTooLarge { .. } | DocstoreError::NoSentenceStart { .. }) => {
            let tok = Tokenizer::new();
            let body = doc.body();
            let mut end = body.len();
            while tok.count(&body[..end]) > budget {
                end -= (end / 8).max(1);
                while !body.is_char_boundary(end) {
                    end -= 1;
                }
            }
            Ok(doc.slice(0..end))
        }
        Err(e) => Err(e),
    }
}

/// Samples `n_samples` responses, sample `i` conditioned on document
/// `i mod k` alone, and scores each. Dead-ended samples are skipped.
pub fn sample_candidates<R: Rng + ?Sized>(
    question: &str,
    docs: &[Document],
    model: &dyn TokenModel,
    reward: &dyn RewardModel,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<Vec<Candidate>, PipelineError> {
    config.validate()?;
    if docs.is_empty() {
        return Err(PipelineError::RetrievalEmpty);
    }
    let sample_config = SampleConfig {
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        max_retries: config.max_retries,
    };
    let samplers = docs
        .iter()
        .map(|d| ConstrainedSampler::new(model, std::slice::from_ref(d), question, sample_config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let d = i % docs.len();
        match samplers[d].sample(rng) {
            Ok(s) => out.push(Candidate {
                sample_index: i,
                doc_index: d,
                score: reward.reward(question, &s.response),
                response: s.response,
            }),
            Err(DecodeError::DeadEnd { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        return Err(PipelineError::AllSamplesDeadEnded(config.n_samples));
    }
    Ok(out)
}

/// Highest score, ties to the lowest sample index.
pub fn select_best(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().fold(None, |best: Option<&Candidate>, c| match best {
        Some(b) if b.score >= c.score => Some(b),
        _ => Some(c),
    })
}

/// Answers from already retrieved documents, returning the candidates too.
pub fn answer_with_candidates<R: Rng + ?Sized>(
    question: &str,
    docs: &[Document],
    model: &dyn TokenModel,
    reward: &dyn RewardModel,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<(ScoredResponse, Vec<Candidate>), PipelineError> {
    let candidates = sample_candidates(question, docs, model, reward, config, rng)?;
    let best = select_best(&candidates).expect("nonempty");
    let doc = &docs[best.doc_index];
    let sr = ScoredResponse {
        output: best.response.raw().to_owned(),
        response: best.response.clone(),
        score: best.score,
        source_doc_id: doc.id().to_owned(),
        source_url: doc.url().to_owned(),
        sample_index: best.sample_index,
        declined: false,
    };
    let sr = match config.decline_threshold {
        Some(t) => decline_or_answer(sr, t, &config.decline_string),
        None => sr,
    };
    Ok((sr, candidates))
}

/// Retrieves the top `k_docs` pages for the question as typed, then samples
/// and reranks.
pub fn answer<R: Rng + ?Sized>(
    question: &str,
    model: &dyn TokenModel,
    provider: &dyn SearchProvider,
    reward: &dyn RewardModel,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<ScoredResponse, PipelineError> {
    config.validate()?;
    let hits = provider.search(question, config.k_docs, None)?;
    if hits.is_empty() {
        return Err(PipelineError::RetrievalEmpty);
    }
    let docs = hits
        .iter()
        .map(|h| fit_document(question, &h.doc, h.snippet.as_deref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(answer_with_candidates(question, &docs, model, reward, config, rng)?.0)
}

/// Marks the response declined when its score is under `threshold`.
pub fn decline_or_answer(mut sr: ScoredResponse, threshold: f64, decline_string: &str) -> ScoredResponse {
    sr.declined = sr.score < threshold;
    sr.output = if sr.declined {
        decline_string.to_owned()
    } else {
        sr.response.raw().to_owned()
    };
    sr
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub coverage: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    /// In order of increasing threshold, so coverage strictly decreases.
    pub points: Vec<CurvePoint>,
}

/// Coverage `|score >= t| / n` and quality over the attempted items, per
/// threshold. Thresholds attempting nothing are left out, as are thresholds
/// repeating the coverage of a lower one.
pub fn coverage_quality_curve(items: &[(f64, bool)], thresholds: &[f64]) -> Result<CoverageCurve, PipelineError> {
    if items.is_empty() {
        return Err(PipelineError::EmptyItems);
    }
    let mut ts = thresholds.to_vec();
    ts.sort_by(f64::total_cmp);
    let mut points: Vec<CurvePoint> = Vec::new();
    for t in ts {
        let attempted: Vec<bool> = items.iter().filter(|(s, _)| *s >= t).map(|(_, q)| *q).collect();
        if attempted.is_empty() {
            continue;
        }
        let coverage = attempted.len() as f64 / items.len() as f64;
        if points.last().is_some_and(|p| p.coverage == coverage) {
            continue;
        }
        let quality = attempted.iter().filter(|&&q| q).count() as f64 / attempted.len() as f64;
        points.push(CurvePoint {
            threshold: t,
            coverage,
            quality,
        });
    }
    Ok(CoverageCurve { points })
}

/// Every distinct score as a threshold: the full curve.
pub fn all_score_thresholds(items: &[(f64, bool)]) -> Vec<f64> {
    let mut ts: Vec<f64> = items.iter().map(|(s, _)| *s).collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts
}

/// The `k`-th highest dev score with `k = round(target * n)`, so that
/// `k` items are attempted when scores are distinct. `k = 0` gives +inf.
pub fn calibrate_threshold(dev_items: &[(f64, bool)], target_coverage: f64) -> Result<f64, PipelineError> {
    if dev_items.is_empty() {
        return Err(PipelineError::EmptyItems);
    }
    if !(0.0..=1.0).contains(&target_coverage) {
        return Err(PipelineError::InvalidConfig("target coverage must be in [0, 1]".into()));
    }
    let n = dev_items.len();
    let k = ((target_coverage * n as f64).round() as usize).min(n);
    if k == 0 {
        return Ok(f64::INFINITY);
    }
    let mut scores: Vec<f64> = dev_items.iter().map(|(s, _)| *s).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    Ok(scores[k - 1])
}

/// Order of the bootstrap n-gram model.
pub const BOOTSTRAP_ORDER: usize = 4;

/// Add-k constant for the bootstrap model. Small, since most contexts are
/// seen only a handful of times.
pub const BOOTSTRAP_SMOOTHING: f64 = 1e-4;

/// A small n-gram model trained on the corpus itself plus one templated
/// inline-evidence answer per document, so that sampled claims resemble the
/// corpus text.
pub fn bootstrap_model(docs: &[Document], order: usize, smoothing: f64) -> NGramModel {
    let tok = Tokenizer::new();
    let mut corpus: Vec<Vec<u16>> = docs.iter().map(|d| d.tokens().to_vec()).collect();
    for d in docs {
        let Some(first) = sentence_starts(d.body()).first().copied() else {
            continue;
        };
        let sentence = crate::text::sentence_spans(&d.body()[first..])
            .first()
            .map(|r| &d.body()[first + r.start..first + r.end])
            .unwrap_or("");
        if let Ok(r) = InlineEvidenceResponse::new(sentence, d.title(), sentence) {
            corpus.push(tok.encode(&format!("Page: {}\n\nAnswer:{}", d.title(), r.raw())));
        }
    }
    train_ngram(&corpus, order, smoothing)
}
