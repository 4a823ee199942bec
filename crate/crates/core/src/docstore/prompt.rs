use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::truncate::{allocate_budgets, sentence_starts, truncate_around, TruncateMode, MAX_PROMPT_DOCS};
use super::{DocstoreError, Document};
use crate::tokenizer::{Tokenizer, PROMPT_BUDGET};

/// Share of training prompts built from the target document alone.
pub const SINGLE_DOC_FRACTION: f64 = 1.0 / 3.0;

/// Renders the answering prompt:
///
/// ```text
/// Page: {title}\n\n{source}\n\n   (once per document)
/// Question: {question}\nAnswer:
/// ```
pub fn build_prompt(question: &str, docs: &[Document]) -> Result<String, DocstoreError> {
    let prompt = render(question, docs.iter().map(|d| (d.title(), d.body())));
    let tokens = Tokenizer::new().count(&prompt);
    if tokens > PROMPT_BUDGET {
        return Err(DocstoreError::ContextOverflow {
            tokens,
            limit: PROMPT_BUDGET,
        });
    }
    Ok(prompt)
}

fn render<'a>(question: &str, docs: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    let mut out = String::new();
    for (title, body) in docs {
        out.push_str("Page: ");
        out.push_str(title);
        out.push_str("\n\n");
        out.push_str(body);
        out.push_str("\n\n");
    }
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nAnswer:");
    out
}

/// Prompt tokens spent on everything except document bodies.
pub fn prompt_overhead<'a>(question: &str, titles: impl Iterator<Item = &'a str>) -> usize {
    let prompt = render(question, titles.map(|t| (t, "")));
    Tokenizer::new().count(&prompt)
}

/// A training prompt: truncated documents in prompt order with their budgets.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub question: String,
    pub docs: Vec<Document>,
    pub budgets: Vec<usize>,
    /// Position of the target document within `docs`.
    pub target: usize,
    pub total_budget: usize,
}

impl PromptSpec {
    pub fn render(&self) -> Result<String, DocstoreError> {
        build_prompt(&self.question, &self.docs)
    }
}

/// Builds a fine-tuning prompt around a target document and quote.
///
/// A third of the time only the target is used; otherwise between one and
/// five documents, the rest taken from `others` in rank order. Documents are
/// shuffled, the body budget is split at random, and each document is cut
/// around its required span (the quote for the target, the search snippet for
/// the others, or the first sentence when there is no snippet).
pub fn build_training_prompt<R: Rng + ?Sized>(
    question: &str,
    target: &Document,
    quote_span: Range<usize>,
    others: &[(Document, Option<Range<usize>>)],
    rng: &mut R,
) -> Result<PromptSpec, DocstoreError> {
    let n = if rng.gen_bool(SINGLE_DOC_FRACTION) {
        1
    } else {
        rng.gen_range(1..=MAX_PROMPT_DOCS).min(others.len() + 1)
    };
    let mut chosen: Vec<(Document, Range<usize>, bool)> = vec![(target.clone(), quote_span, true)];
    for (doc, span) in others.iter().take(n - 1) {
        let span = span.clone().unwrap_or_else(|| {
            let s = sentence_starts(doc.body()).first().copied().unwrap_or(0);
            s..s
        });
        chosen.push((doc.clone(), span, false));
    }
    chosen.shuffle(rng);

    let overhead = prompt_overhead(question, chosen.iter().map(|(d, _, _)| d.title()));
    let total = PROMPT_BUDGET.checked_sub(overhead).ok_or(DocstoreError::ContextOverflow {
        tokens: overhead,
        limit: PROMPT_BUDGET,
    })?;
    let budgets = allocate_budgets(chosen.len(), total, rng)?;
    let mut docs = Vec::with_capacity(chosen.len());
    let mut target_pos = 0;
    for (i, ((doc, span, is_target), &budget)) in chosen.iter().zip(&budgets).enumerate() {
        docs.push(truncate_around(doc, span.clone(), budget, TruncateMode::Train, rng)?);
        if *is_target {
            target_pos = i;
        }
    }
    Ok(PromptSpec {
        question: question.to_owned(),
        docs,
        budgets,
        target: target_pos,
        total_budget: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_document_template() {
        let docs = [Document::new("1", "T", "u", "B")];
        assert_eq!(build_prompt("Q", &docs).unwrap(), "Page: T\n\nB\n\nQuestion: Q\nAnswer:");
    }

    #[test]
    fn no_documents() {
        assert_eq!(build_prompt("Q", &[]).unwrap(), "Question: Q\nAnswer:");
    }

    #[test]
    fn documents_keep_their_order() {
        let docs = [Document::new("1", "A", "", "x"), Document::new("2", "B", "", "y")];
        assert_eq!(
            build_prompt("Q", &docs).unwrap(),
            "Page: A\n\nx\n\nPage: B\n\ny\n\nQuestion: Q\nAnswer:"
        );
    }

    #[test]
    fn overflow() {
        let docs = [Document::new("1", "A", "", "z".repeat(PROMPT_BUDGET))];
        assert!(matches!(build_prompt("Q", &docs), Err(DocstoreError::ContextOverflow { .. })));
    }

    #[test]
    fn overhead_counts_everything_but_bodies() {
        let docs = [Document::new("1", "Alpha", "", "body text"), Document::new("2", "B", "", "more")];
        let full = Tokenizer::new().count(&build_prompt("why?", &docs).unwrap());
        let bodies: usize = docs.iter().map(|d| d.tokens().len()).sum();
        assert_eq!(prompt_overhead("why?", docs.iter().map(|d| d.title())), full - bodies);
    }

    fn long_doc(id: &str, n: usize) -> Document {
        let body: Vec<String> = (0..n)
            .map(|i| format!("Document {id} sentence {i} carries some filler words to take up space."))
            .collect();
        Document::new(id, format!("Title {id}"), "", body.join(" "))
    }

    #[test]
    fn training_prompts_contain_the_quote_and_fit() {
        let target = long_doc("t", 120);
        let quote = "Document t sentence 77 carries some filler words";
        let start = target.body().find(quote).unwrap();
        let others: Vec<(Document, Option<Range<usize>>)> =
            (0..6).map(|i| (long_doc(&i.to_string(), 100), None)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut sizes = std::collections::BTreeSet::new();
        for _ in 0..60 {
            let spec = build_training_prompt("q?", &target, start..start + quote.len(), &others, &mut rng).unwrap();
            assert!(spec.docs[spec.target].body().contains(quote));
            assert_eq!(spec.budgets.iter().sum::<usize>(), spec.total_budget);
            for (d, b) in spec.docs.iter().zip(&spec.budgets) {
                assert!(d.tokens().len() <= *b);
            }
            let prompt = spec.render().unwrap();
            assert!(Tokenizer::new().count(&prompt) <= PROMPT_BUDGET);
            sizes.insert(spec.docs.len());
        }
        assert!(sizes.contains(&1) && sizes.len() >= 3, "{sizes:?}");
    }
}
