//! Handcrafted evidence selection: first sentence, random sentence,
//! TF-IDF sentence and the ROUGE-L sentence window.

use std::ops::Range;

use rand::Rng;
use thiserror::Error;

use crate::docstore::Document;
use crate::text::{cosine, sentence_spans, words, DocFreq};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("document has no sentences")]
    EmptyDocument,
    #[error("no document has any sentences")]
    EmptyDocuments,
    #[error("answer is empty")]
    EmptyAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    /// Byte span in the parent body.
    pub span: Range<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SentenceList {
    pub sentences: Vec<Sentence>,
}

impl SentenceList {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().map(|s| s.text.as_str())
    }
}

pub fn split_sentences(body: &str) -> SentenceList {
    SentenceList {
        sentences: sentence_spans(body)
            .into_iter()
            .map(|span| Sentence {
                text: body[span.clone()].to_owned(),
                span,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrivialKind {
    First,
    Random,
}

pub fn trivial_evidence<R: Rng + ?Sized>(
    doc: &Document,
    kind: TrivialKind,
    rng: &mut R,
) -> Result<Sentence, BaselineError> {
    let mut list = split_sentences(doc.body()).sentences;
    if list.is_empty() {
        return Err(BaselineError::EmptyDocument);
    }
    let i = match kind {
        TrivialKind::First => 0,
        TrivialKind::Random => rng.gen_range(0..list.len()),
    };
    Ok(list.swap_remove(i))
}

/// The sentence closest to `question ++ answer` in TF-IDF space, with IDF
/// taken over the sentences of `doc`. Ties go to the earliest sentence.
pub fn tfidf_sentence(doc: &Document, question: &str, answer: &str) -> Result<Sentence, BaselineError> {
    let list = split_sentences(doc.body()).sentences;
    if list.is_empty() {
        return Err(BaselineError::EmptyDocument);
    }
    let units: Vec<Vec<String>> = list.iter().map(|s| words(&s.text)).collect();
    let df = DocFreq::from_units(&units);
    let query = df.vector(&words(&format!("{question} {answer}")), DocFreq::plain_idf);
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, unit) in units.iter().enumerate() {
        let sim = cosine(&df.vector(unit, DocFreq::plain_idf), &query);
        if sim > best.0 {
            best = (sim, i);
        }
    }
    Ok(list[best.1].clone())
}

fn lcs_len<S: PartialEq>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        prev = cur;
    }
    prev[b.len()]
}

/// ROUGE-L F1 over lowercased word tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    rouge_l_words(&words(candidate), &words(reference))
}

fn rouge_l_words(c: &[String], r: &[String]) -> f64 {
    let lcs = lcs_len(c, r);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    2.0 * p * rec / (p + rec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RougeEvidence {
    pub doc_index: usize,
    /// Sentence indices of the window.
    pub sentences: Range<usize>,
    /// Body slice from the first sentence start to the last sentence end.
    pub text: String,
    pub score: f64,
}

/// Best window of `n + 2` consecutive sentences per document, `n` being the
/// answer's sentence count; returns the second-best of these across
/// documents, or the best when only one document has sentences.
pub fn rouge_evidence(answer: &str, docs: &[Document]) -> Result<RougeEvidence, BaselineError> {
    if answer.trim().is_empty() {
        return Err(BaselineError::EmptyAnswer);
    }
    let n = split_sentences(answer).len().max(1);
    let target = words(answer);
    let mut per_doc = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let list = split_sentences(doc.body()).sentences;
        if list.is_empty() {
            continue;
        }
        let width = (n + 2).min(list.len());
        let mut best: Option<RougeEvidence> = None;
        for start in 0..=list.len() - width {
            let span = list[start].span.start..list[start + width - 1].span.end;
            let text = &doc.body()[span];
            let score = rouge_l_words(&words(text), &target);
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(RougeEvidence {
                    doc_index: d,
                    sentences: start..start + width,
                    text: text.to_owned(),
                    score,
                });
            }
        }
        per_doc.extend(best);
    }
    // stable: equal scores keep document order
    per_doc.sort_by(|a, b| b.score.total_cmp(&a.score));
    match per_doc.len() {
        0 => Err(BaselineError::EmptyDocuments),
        1 => Ok(per_doc.swap_remove(0)),
        _ => Ok(per_doc.swap_remove(1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(body: &str) -> Document {
        Document::new("d", "T", "u", body)
    }

    #[test]
    fn splits_simple_text() {
        assert_eq!(split_sentences("A b. C d.").texts().collect::<Vec<_>>(), ["A b.", "C d."]);
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("Only one sentence here.").len(), 1);
    }

    #[test]
    fn spans_point_into_the_body() {
        let body = "  First one.  Second one?\n\nThird!";
        for s in split_sentences(body).sentences {
            assert_eq!(&body[s.span.clone()], s.text);
        }
    }

    #[test]
    fn first_and_random() {
        let d = doc("One. Two. Three.");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(trivial_evidence(&d, TrivialKind::First, &mut rng).unwrap().text, "One.");
        let single = doc("Alone.");
        assert_eq!(trivial_evidence(&single, TrivialKind::Random, &mut rng).unwrap().text, "Alone.");
        assert_eq!(
            trivial_evidence(&doc(""), TrivialKind::First, &mut rng),
            Err(BaselineError::EmptyDocument)
        );
    }

    #[test]
    fn random_sentence_is_uniform() {
        let d = doc("One. Two. Three. Four.");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let s = trivial_evidence(&d, TrivialKind::Random, &mut rng).unwrap();
            counts[["One.", "Two.", "Three.", "Four."].iter().position(|t| *t == s.text).unwrap()] += 1;
        }
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    /// Independent TF-IDF cosine with plain IDF.
    fn brute_tfidf(sentences: &[&str], query: &str) -> Vec<f64> {
        use std::collections::BTreeMap;
        let toks: Vec<Vec<String>> = sentences.iter().map(|s| words(s)).collect();
        let s = toks.len() as f64;
        let idf = |t: &str| {
            let df = toks.iter().filter(|u| u.iter().any(|w| w == t)).count() as f64;
            (s / (1.0 + df)).ln()
        };
        let vec = |ws: &[String]| {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for w in ws {
                *m.entry(w.clone()).or_default() += 1.0;
            }
            m.into_iter().map(|(k, v)| (k.clone(), v * idf(&k))).collect::<BTreeMap<_, _>>()
        };
        let q = vec(&words(query));
        toks.iter()
            .map(|t| {
                let v = vec(t);
                let dot: f64 = v.iter().map(|(k, x)| x * q.get(k).unwrap_or(&0.0)).sum();
                let n = v.values().map(|x| x * x).sum::<f64>().sqrt() * q.values().map(|x| x * x).sum::<f64>().sqrt();
                if n == 0.0 { 0.0 } else { dot / n }
            })
            .collect()
    }

    #[test]
    fn tfidf_picks_the_answer_sentence() {
        let sents = [
            "The river flows north through the valley.",
            "Farmers grow wheat on the plains.",
            "The capital city hosts a large cathedral built in marble.",
            "Winters are long and cold.",
            "Tourists visit in the summer months.",
        ];
        let d = doc(&sents.join(" "));
        let got = tfidf_sentence(&d, "What does the capital host?", "a marble cathedral").unwrap();
        assert_eq!(got.text, sents[2]);
        let scores = brute_tfidf(&sents, "What does the capital host? a marble cathedral");
        let argmax = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &s)| if s > b.1 { (i, s) } else { b })
            .0;
        assert_eq!(argmax, 2);
    }

    #[test]
    fn tfidf_ties_and_single_sentence() {
        assert_eq!(tfidf_sentence(&doc("Just this."), "q", "a").unwrap().text, "Just this.");
        let d = doc("Alpha beta. Gamma delta. Epsilon.");
        assert_eq!(tfidf_sentence(&d, "zzz", "yyy").unwrap().text, "Alpha beta.");
        assert_eq!(tfidf_sentence(&doc("  "), "q", "a"), Err(BaselineError::EmptyDocument));
    }

    #[test]
    fn tfidf_ignores_query_case_and_spacing() {
        let d = doc("Red apples grow here. Blue whales swim there. Green frogs jump everywhere.");
        let a = tfidf_sentence(&d, "where do whales swim", "there").unwrap();
        let b = tfidf_sentence(&d, "WHERE   do Whales\tswim", "  THERE ").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rouge_basics() {
        assert_eq!(rouge_l("the cat sat", "the cat sat"), 1.0);
        assert_eq!(rouge_l("a b c", "d e f"), 0.0);
        assert_eq!(rouge_l("", ""), 0.0);
        // lcs("a b c d", "a c e") = 2: P = 2/4, R = 2/3
        let f = 2.0 * 0.5 * (2.0 / 3.0) / (0.5 + 2.0 / 3.0);
        assert!((rouge_l("a b c d", "a c e") - f).abs() < 1e-12);
    }

    /// Exponential LCS by recursion; fine for short inputs.
    fn lcs_oracle(a: &[String], b: &[String]) -> usize {
        fn go(a: &[String], b: &[String], memo: &mut std::collections::HashMap<(usize, usize), usize>) -> usize {
            if a.is_empty() || b.is_empty() {
                return 0;
            }
            let key = (a.len(), b.len());
            if let Some(&v) = memo.get(&key) {
                return v;
            }
            let v = if a[0] == b[0] {
                1 + go(&a[1..], &b[1..], memo)
            } else {
                go(&a[1..], b, memo).max(go(a, &b[1..], memo))
            };
            memo.insert(key, v);
            v
        }
        go(a, b, &mut Default::default())
    }

    proptest! {
        #[test]
        fn rouge_matches_lcs_oracle(a in proptest::collection::vec("[abcd]", 0..20), b in proptest::collection::vec("[abcd]", 0..20)) {
            let (ca, cb) = (a.join(" "), b.join(" "));
            let l = lcs_oracle(&a, &b);
            let want = if l == 0 { 0.0 } else {
                let (p, r) = (l as f64 / a.len() as f64, l as f64 / b.len() as f64);
                2.0 * p * r / (p + r)
            };
            prop_assert!((rouge_l(&ca, &cb) - want).abs() < 1e-12);
            prop_assert!((rouge_l(&ca, &cb) - rouge_l(&cb, &ca)).abs() < 1e-12);
        }
    }

    #[test]
    fn rouge_single_window() {
        let d = doc("One fish. Two fish. Red fish.");
        let ev = rouge_evidence("Fish are red.", &[d]).unwrap();
        assert_eq!(ev.sentences, 0..3);
        assert_eq!(ev.text, "One fish. Two fish. Red fish.");
    }

    #[test]
    fn rouge_takes_the_second_best_document() {
        let strong = doc("The tall tower stands in the old town. It was built long ago. Many visit it. Birds nest there.");
        let weak = doc("A tower exists. Something else entirely. Unrelated words here. More filler text.");
        let ev = rouge_evidence("The tall tower stands in the old town.", &[strong.clone(), weak.clone()]).unwrap();
        assert_eq!(ev.doc_index, 1);
        let first = rouge_evidence("The tall tower stands in the old town.", &[strong]).unwrap();
        assert_eq!(first.doc_index, 0);
        assert!(first.score > ev.score);
    }

    #[test]
    fn rouge_errors() {
        assert_eq!(rouge_evidence("x", &[]), Err(BaselineError::EmptyDocuments));
        assert_eq!(rouge_evidence("x", &[doc("")]), Err(BaselineError::EmptyDocuments));
        assert_eq!(rouge_evidence(" ", &[doc("A.")]), Err(BaselineError::EmptyAnswer));
    }

    proptest! {
        #[test]
        fn rouge_evidence_matches_exhaustive_windows(
            bodies in proptest::collection::vec(proptest::collection::vec("[A-D][a-d]{0,3}( [a-d]{1,3}){0,3}\\.", 1..7), 1..9),
            answer in "[A-D][a-d]{0,3}( [a-d]{1,3}){0,4}\\.( [A-D][a-d]{1,3}\\.)?",
        ) {
            let docs: Vec<Document> = bodies.iter().map(|s| doc(&s.join(" "))).collect();
            let n = split_sentences(&answer).len();
            let mut best = Vec::new();
            for (d, dd) in docs.iter().enumerate() {
                let list = split_sentences(dd.body()).sentences;
                let w = (n + 2).min(list.len());
                let mut top = (f64::NEG_INFINITY, d, 0);
                for s in 0..=list.len() - w {
                    let text = &dd.body()[list[s].span.start..list[s + w - 1].span.end];
                    let r = rouge_l(text, &answer);
                    if r > top.0 { top = (r, d, s); }
                }
                best.push(top);
            }
            let mut order: Vec<usize> = (0..best.len()).collect();
            order.sort_by(|&a, &b| best[b].0.total_cmp(&best[a].0).then(a.cmp(&b)));
            let pick = best[order[if order.len() > 1 { 1 } else { 0 }]];
            let got = rouge_evidence(&answer, &docs).unwrap();
            prop_assert_eq!(got.doc_index, pick.1);
            prop_assert_eq!(got.sentences.start, pick.2);
            prop_assert!((got.score - pick.0).abs() < 1e-12);
        }
    }
}
