use std::ops::Range;

use rand::Rng;

use super::{DocstoreError, Document};
use crate::text::sentence_spans;
use crate::tokenizer::{Tokenizer, PROMPT_BUDGET};

/// At inference a fragment may start at most this many characters before
/// the span it must contain.
pub const INFER_LOOKBACK_CHARS: usize = 500;

/// Prompts hold between one and this many documents.
pub const MAX_PROMPT_DOCS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruncateMode {
    /// Start uniformly at random among sentence starts that fit.
    Train,
    /// Start at the first sentence start within the lookback window.
    Infer,
}

/// Splits `total` tokens across `n_docs` documents in proportion to factors
/// drawn from uniform(0.5, 1.5).
pub fn allocate_budgets<R: Rng + ?Sized>(
    n_docs: usize,
    total: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DocstoreError> {
    let factors: Vec<f64> = (0..n_docs).map(|_| rng.gen_range(0.5..1.5)).collect();
    allocate_budgets_with_factors(&factors, total)
}

/// `length_i = floor(factor_i / sum(factors) * total)`, with the rounding
/// remainder added to the last document.
pub fn allocate_budgets_with_factors(factors: &[f64], total: usize) -> Result<Vec<usize>, DocstoreError> {
    if factors.is_empty() || factors.len() > MAX_PROMPT_DOCS {
        return Err(DocstoreError::InvalidDocCount(factors.len()));
    }
    if total > PROMPT_BUDGET {
        return Err(DocstoreError::BudgetTooLarge(total));
    }
    let sum: f64 = factors.iter().sum();
    let mut budgets: Vec<usize> = factors
        .iter()
        .map(|f| ((f / sum) * total as f64).floor() as usize)
        .collect();
    let assigned: usize = budgets.iter().sum();
    // floating error could overshoot by one in pathological cases
    let last = budgets.len() - 1;
    if assigned <= total {
        budgets[last] += total - assigned;
    } else {
        budgets[last] -= assigned - total;
    }
    Ok(budgets)
}

/// Byte offsets where sentences or paragraphs begin.
pub fn sentence_starts(body: &str) -> Vec<usize> {
    sentence_spans(body).into_iter().map(|r| r.start).collect()
}

/// Cuts `doc` down to at most `budget` tokens while keeping `required`
/// (a byte range of the body) intact and starting on a sentence start.
///
/// The fragment runs from the chosen start as far as the budget allows. In
/// `Infer` mode, if no sentence start lies within the lookback window, the
/// closest start before the span that fits is used instead.
pub fn truncate_around<R: Rng + ?Sized>(
    doc: &Document,
    required: Range<usize>,
    budget: usize,
    mode: TruncateMode,
    rng: &mut R,
) -> Result<Document, DocstoreError> {
    let body = doc.body();
    if required.start > required.end
        || required.end > body.len()
        || !body.is_char_boundary(required.start)
        || !body.is_char_boundary(required.end)
    {
        return Err(DocstoreError::InvalidSpan {
            start: required.start,
            end: required.end,
        });
    }
    let tok = Tokenizer::new();
    if doc.tokens().len() <= budget {
        return Ok(doc.clone());
    }
    let needed = tok.count(&body[required.clone()]);
    if needed > budget {
        return Err(DocstoreError::SpanTooLarge { needed, budget });
    }

    let candidates: Vec<usize> = sentence_starts(body)
        .into_iter()
        .filter(|&s| s <= required.start && tok.count(&body[s..required.end]) <= budget)
        .collect();
    if candidates.is_empty() {
        return Err(DocstoreError::NoSentenceStart { budget });
    }
    let start = match mode {
        TruncateMode::Train => candidates[rng.gen_range(0..candidates.len())],
        TruncateMode::Infer => candidates
            .iter()
            .copied()
            .find(|&s| body[s..required.start].chars().count() <= INFER_LOOKBACK_CHARS)
            .unwrap_or(*candidates.last().expect("nonempty")),
    };

    // Token count grows by at most one per byte, so binary search the end.
    let boundaries: Vec<usize> = body[required.end..]
        .char_indices()
        .map(|(i, _)| required.end + i)
        .skip(1)
        .chain(std::iter::once(body.len()))
        .collect();
    let fits = |e: usize| tok.count(&body[start..e]) <= budget;
    let n_fit = boundaries.partition_point(|&e| fits(e));
    let end = if n_fit == 0 { required.end } else { boundaries[n_fit - 1] };
    Ok(doc.slice(start..end))
}
