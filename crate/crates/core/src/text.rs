//! Word tokenization, TF-IDF vectors and rule-based sentence segmentation.

use std::collections::HashMap;
use std::ops::Range;

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn term_counts<S: AsRef<str>>(words: &[S]) -> HashMap<&str, f64> {
    let mut counts = HashMap::new();
    for w in words {
        *counts.entry(w.as_ref()).or_insert(0.0) += 1.0;
    }
    counts
}

/// Sparse vector keyed by term.
pub type SparseVec = HashMap<String, f64>;

pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, x)| large.get(k).map(|y| x * y))
        .sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Document frequencies over a collection of tokenized units.
#[derive(Debug, Clone, Default)]
pub struct DocFreq {
    pub units: usize,
    pub df: HashMap<String, usize>,
}

impl DocFreq {
    pub fn from_units<S: AsRef<str>>(units: &[Vec<S>]) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for unit in units {
            let mut seen: Vec<&str> = unit.iter().map(|w| w.as_ref()).collect();
            seen.sort_unstable();
            seen.dedup();
            for w in seen {
                *df.entry(w.to_owned()).or_insert(0) += 1;
            }
        }
        Self {
            units: units.len(),
            df,
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// `ln(S / (1 + df))`, which goes negative for terms in every unit.
    pub fn plain_idf(&self, term: &str) -> f64 {
        (self.units as f64 / (1.0 + self.df(term) as f64)).ln()
    }

    /// `ln((1 + S) / (1 + df)) + 1`, always positive.
    pub fn smooth_idf(&self, term: &str) -> f64 {
        ((1.0 + self.units as f64) / (1.0 + self.df(term) as f64)).ln() + 1.0
    }

    pub fn vector<S: AsRef<str>>(&self, words: &[S], idf: impl Fn(&Self, &str) -> f64) -> SparseVec {
        term_counts(words)
            .into_iter()
            .map(|(w, tf)| (w.to_owned(), tf * idf(self, w)))
            .collect()
    }
}

/// TF-IDF cosine between two short texts, with smoothed IDF computed over
/// the texts in `units`.
pub fn tfidf_cosine(a: &str, b: &str, units: &[&str]) -> f64 {
    let tokenized: Vec<Vec<String>> = units.iter().map(|u| words(u)).collect();
    let df = DocFreq::from_units(&tokenized);
    let va = df.vector(&words(a), DocFreq::smooth_idf);
    let vb = df.vector(&words(b), DocFreq::smooth_idf);
    cosine(&va, &vb)
}

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "inc", "ltd", "co",
    "fig", "gen", "col", "lt", "sgt", "rev", "mt", "capt", "gov", "sen", "rep", "e.g", "i.e",
    "u.s", "a.m", "p.m", "approx", "dept", "est", "jan", "feb", "mar", "apr", "jun", "jul",
    "aug", "sep", "sept", "oct", "nov", "dec",
];

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// Does the word ending at byte `dot` (exclusive, the position of a '.')
/// look like an abbreviation or an initial?
fn abbreviation_before(text: &str, dot: usize) -> bool {
    let head = &text[..dot];
    let start = head
        .rfind(|c: char| c.is_whitespace() || is_opening(c))
        .map_or(0, |p| p + head[p..].chars().next().map_or(1, char::len_utf8));
    let word = &head[start..];
    let mut chars = word.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        // single-letter initial such as "J."
        return c.is_uppercase();
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

/// Byte spans of sentences in `text`.
///
/// A sentence ends at `.`, `?` or `!` (plus any closing quotes or brackets)
/// when followed by whitespace and an uppercase letter, optionally behind an
/// opening quote. A period after a known abbreviation or a single capital
/// initial does not end a sentence. A blank line always ends a paragraph.
/// Spans are trimmed of surrounding whitespace.
pub fn sentence_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut cuts = Vec::new(); // byte offsets where a new segment begins
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            // blank line: newline, optional horizontal space, newline
            let mut k = i + 1;
            while k < chars.len() && matches!(chars[k].1, ' ' | '\t' | '\r') {
                k += 1;
            }
            if k < chars.len() && chars[k].1 == '\n' {
                cuts.push(chars[k].0 + 1);
                i = k + 1;
                continue;
            }
        }
        if matches!(c, '.' | '?' | '!') && !(c == '.' && abbreviation_before(text, pos)) {
            let mut k = i + 1;
            while k < chars.len() && (is_closing(chars[k].1) || matches!(chars[k].1, '.' | '?' | '!')) {
                k += 1;
            }
            let ws_start = k;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            if k > ws_start && k < chars.len() {
                let mut m = k;
                while m < chars.len() && is_opening(chars[m].1) {
                    m += 1;
                }
                if m < chars.len() && chars[m].1.is_uppercase() {
                    cuts.push(chars[ws_start].0);
                    i = k;
                    continue;
                }
            }
            // rescan the whitespace so a blank line there still cuts
            i = ws_start;
            continue;
        }
        i += 1;
    }

    let mut spans = Vec::new();
    let mut begin = 0;
    for end in cuts.into_iter().chain(std::iter::once(text.len())) {
        if let Some(span) = trim_span(text, begin..end) {
            spans.push(span);
        }
        begin = end;
    }
    spans
}

fn trim_span(text: &str, r: Range<usize>) -> Option<Range<usize>> {
    let slice = &text[r.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    (lead + trail < slice.len()).then(|| r.start + lead..r.end - trail)
}
