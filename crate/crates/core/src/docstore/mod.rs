//! Context documents: ingestion, retrieval, snippet alignment, budgeted
//! truncation and prompt assembly.

mod fuzzy;
mod prompt;
mod search;
mod truncate;

use std::io::{BufRead, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::{TokenId, Tokenizer};

pub use fuzzy::{fuzzy_match_snippet, Snippet, SNIPPET_MATCH_THRESHOLD};
pub use prompt::{build_prompt, build_training_prompt, prompt_overhead, PromptSpec, SINGLE_DOC_FRACTION};
pub use search::{
    on_domain, query_with_site_filter, HttpSearchProvider, LocalSearchProvider, SearchHit,
    SearchProvider, SearchTransport, SiteFilter, UreqTransport, MAX_RESULTS,
};
pub use truncate::{
    allocate_budgets, allocate_budgets_with_factors, sentence_starts, truncate_around, TruncateMode,
    INFER_LOOKBACK_CHARS, MAX_PROMPT_DOCS,
};

#[derive(Debug, Error)]
pub enum DocstoreError {
    #[error("prompt needs {tokens} tokens but only {limit} are available")]
    ContextOverflow { tokens: usize, limit: usize },
    #[error("search provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("the corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("required span alone needs {needed} tokens, budget is {budget}")]
    SpanTooLarge { needed: usize, budget: usize },
    #[error("span {start}..{end} is outside the document or splits a character")]
    InvalidSpan { start: usize, end: usize },
    #[error("no sentence start before the span fits in {budget} tokens")]
    NoSentenceStart { budget: usize },
    #[error("document count {0} is outside 1..=5")]
    InvalidDocCount(usize),
    #[error("total budget {0} exceeds the prompt budget")]
    BudgetTooLarge(usize),
    #[error("document `{0}` has an empty title")]
    EmptyTitle(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("corpus line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A retrieved source text with its token cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    title: String,
    url: String,
    body: String,
    tokens: Vec<TokenId>,
    /// Byte range of the original body this one was cut from.
    source_range: Option<Range<usize>>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        url: impl Into<String>,
        body: impl Into<String>,
    ) -> Self {
        let body = body.into();
        Self {
            id: id.into(),
            title: title.into(),
            url: url.into(),
            tokens: Tokenizer::new().encode(&body),
            body,
            source_range: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// `encode(body)`.
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn title_tokens(&self) -> Vec<TokenId> {
        Tokenizer::new().encode(&self.title)
    }

    /// Set when this document is a truncated fragment of another.
    pub fn source_range(&self) -> Option<Range<usize>> {
        self.source_range.clone()
    }

    /// A copy holding only `range` of the body.
    pub(crate) fn slice(&self, range: Range<usize>) -> Self {
        let offset = self.source_range.as_ref().map_or(0, |r| r.start);
        let mut doc = Document::new(
            self.id.clone(),
            self.title.clone(),
            self.url.clone(),
            &self.body[range.clone()],
        );
        doc.source_range = Some(offset + range.start..offset + range.end);
        doc
    }
}

/// One line of a corpus JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub url: String,
    pub body: String,
    /// Search snippet to align against the body during ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    /// Byte span of the aligned snippet, filled in by ingestion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_span: Option<(usize, usize)>,
}

impl From<&CorpusRecord> for Document {
    fn from(r: &CorpusRecord) -> Self {
        Document::new(r.id.clone(), r.title.clone(), r.url.clone(), r.body.clone())
    }
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<CorpusRecord>, DocstoreError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord =
            serde_json::from_str(&line).map_err(|source| DocstoreError::Parse { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(mut w: W, records: &[CorpusRecord]) -> Result<(), DocstoreError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Outcome of [`ingest`].
#[derive(Debug, Default)]
pub struct IngestReport {
    pub kept: Vec<CorpusRecord>,
    /// Ids dropped because their snippet aligned below the threshold.
    pub dropped_low_match: Vec<String>,
}

/// Validates records and aligns snippets. Records whose snippet matches the
/// body with a ratio under [`SNIPPET_MATCH_THRESHOLD`] are dropped.
pub fn ingest(records: Vec<CorpusRecord>) -> Result<IngestReport, DocstoreError> {
    let mut report = IngestReport::default();
    let mut seen = std::collections::HashSet::new();
    for mut rec in records {
        if rec.title.is_empty() {
            return Err(DocstoreError::EmptyTitle(rec.id));
        }
        if !seen.insert(rec.id.clone()) {
            return Err(DocstoreError::DuplicateId(rec.id));
        }
        if let Some(text) = rec.snippet.as_deref().filter(|s| !s.is_empty()) {
            let doc = Document::from(&rec);
            let snip = fuzzy_match_snippet(&doc, text);
            match snip.span {
                Some(span) => rec.snippet_span = Some((span.start, span.end)),
                None => {
                    report.dropped_low_match.push(rec.id);
                    continue;
                }
            }
        }
        report.kept.push(rec);
    }
    Ok(report)
}
