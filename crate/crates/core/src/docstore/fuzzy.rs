use std::ops::Range;

use super::Document;

/// Snippets aligning below this ratio mark their document for discarding.
pub const SNIPPET_MATCH_THRESHOLD: f64 = 0.75;

/// A search snippet aligned against a document body.
#[derive(Debug, Clone, PartialEq)]
pub struct Snippet {
    pub text: String,
    pub doc_id: String,
    /// Byte span of the best-aligned window, present iff `ratio` reaches the
    /// threshold.
    pub span: Option<Range<usize>>,
    pub ratio: f64,
}

/// Aligns `snippet_text` against every window of the document body.
///
/// The ratio of a window is `1 - edit_distance / max(len(snippet), len(window))`
/// in characters. The best window wins, ties going to the earliest start and
/// then the shortest window. The ratio is exact whenever it reaches
/// [`SNIPPET_MATCH_THRESHOLD`]; below it the search is pruned and the value
/// is a lower bound.
pub fn fuzzy_match_snippet(doc: &Document, snippet_text: &str) -> Snippet {
    let (ratio, window) = best_window(doc.body(), snippet_text);
    let span = (ratio >= SNIPPET_MATCH_THRESHOLD).then_some(window);
    Snippet {
        text: snippet_text.to_owned(),
        doc_id: doc.id().to_owned(),
        span,
        ratio,
    }
}

/// Returns (ratio, byte range) of the best window.
pub(crate) fn best_window(body: &str, snippet: &str) -> (f64, Range<usize>) {
    if snippet.is_empty() {
        return (0.0, 0..0);
    }
    if let Some(pos) = body.find(snippet) {
        return (1.0, pos..pos + snippet.len());
    }
    let s: Vec<char> = snippet.chars().collect();
    let offsets: Vec<usize> = body
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(body.len()))
        .collect();
    let b: Vec<char> = body.chars().collect();
    let (m, n) = (s.len(), b.len());
    if n == 0 {
        return (0.0, 0..0);
    }

    // Free-start alignment: best[j] = min over i of ed(s, b[i..j]).
    let mut prev: Vec<usize> = vec![0; n + 1];
    for (k, &sc) in s.iter().enumerate() {
        let mut cur = vec![k + 1; n + 1];
        for j in 1..=n {
            let sub = prev[j - 1] + usize::from(sc != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    let best_end = prev;

    // Upper bound on any window ending at j: m / (m + best_end[j]).
    let mut ends: Vec<usize> = (1..=n).collect();
    ends.sort_by_key(|&j| (best_end[j], j));

    let mut best: Option<(f64, usize, usize)> = None;
    for (rank, &j) in ends.iter().enumerate() {
        let bound = m as f64 / (m + best_end[j]) as f64;
        let beats = |r: f64| best.is_none_or(|(br, _, _)| r >= br);
        if rank > 0 && (bound < SNIPPET_MATCH_THRESHOLD || !beats(bound)) {
            break;
        }
        for (len, ed) in suffix_distances(&s, &b[..j], 2 * m).into_iter().enumerate().skip(1) {
            let ratio = 1.0 - ed as f64 / m.max(len) as f64;
            let start = j - len;
            let better = match best {
                None => true,
                Some((br, bs, be)) => ratio > br || (ratio == br && (start, j) < (bs, be)),
            };
            if better {
                best = Some((ratio, start, j));
            }
        }
    }
    let (ratio, start, end) = best.unwrap_or((0.0, 0, 0));
    (ratio.max(0.0), offsets[start]..offsets[end])
}

/// `out[len] = ed(s, hay[hay.len() - len..])` for `len` up to `max_len`.
fn suffix_distances(s: &[char], hay: &[char], max_len: usize) -> Vec<usize> {
    let m = s.len();
    let l = hay.len().min(max_len);
    // Align reversed strings: rows over reversed snippet, columns over the
    // last `l` haystack chars read backwards.
    let mut prev: Vec<usize> = (0..=l).collect();
    for k in 1..=m {
        let sc = s[m - k];
        let mut cur = vec![k; l + 1];
        for len in 1..=l {
            let hc = hay[hay.len() - len];
            let sub = prev[len - 1] + usize::from(sc != hc);
            cur[len] = sub.min(prev[len] + 1).min(cur[len - 1] + 1);
        }
        prev = cur;
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edit_distance(a: &[char], b: &[char]) -> usize {
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for (i, &ca) in a.iter().enumerate() {
            let mut cur = vec![i + 1; b.len() + 1];
            for (j, &cb) in b.iter().enumerate() {
                cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    /// Every window, every ratio.
    fn brute(body: &str, snippet: &str) -> (f64, Range<usize>) {
        let s: Vec<char> = snippet.chars().collect();
        let b: Vec<char> = body.chars().collect();
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in 0..b.len() {
            for j in i + 1..=b.len() {
                let ed = edit_distance(&s, &b[i..j]);
                let r = 1.0 - ed as f64 / s.len().max(j - i) as f64;
                if r > best.0 {
                    best = (r, i, j);
                }
            }
        }
        let off = |c: usize| body.char_indices().map(|(i, _)| i).chain([body.len()]).nth(c).unwrap();
        (best.0, off(best.1)..off(best.2))
    }

    fn doc(body: &str) -> Document {
        Document::new("d", "T", "u", body)
    }

    #[test]
    fn exact_containment() {
        let s = fuzzy_match_snippet(&doc("alpha beta gamma"), "beta");
        assert_eq!((s.ratio, s.span), (1.0, Some(6..10)));
    }

    #[test]
    fn one_substitution_in_a_hundred() {
        let window: String = (0..100).map(|i| (b'a' + (i % 26) as u8) as char).collect();
        let body = format!("PREFIX {window} SUFFIX");
        let mut snippet: Vec<char> = window.chars().collect();
        snippet[50] = '#';
        let snippet: String = snippet.into_iter().collect();
        let got = fuzzy_match_snippet(&doc(&body), &snippet);
        let (want, span) = brute(&body, &snippet);
        assert!((got.ratio - 0.99).abs() < 1e-12);
        assert_eq!(got.ratio, want);
        assert_eq!(got.span, Some(span));
    }

    #[test]
    fn disjoint_texts() {
        let s = fuzzy_match_snippet(&doc("aaaaaaaaaaaa"), "zzzzzz");
        assert!(s.ratio < 0.1);
        assert_eq!(s.span, None);
    }

    #[test]
    fn non_ascii_offsets_are_byte_offsets() {
        let body = "Café au lait, très bon";
        let s = fuzzy_match_snippet(&doc(body), "tres bon");
        let span = s.span.unwrap();
        assert_eq!(&body[span], "très bon");
        assert!((s.ratio - 7.0 / 8.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn agrees_with_exhaustive_windows(body in "[abc ]{1,30}", snippet in "[abc]{1,8}") {
            let got = fuzzy_match_snippet(&doc(&body), &snippet);
            let (want, span) = brute(&body, &snippet);
            prop_assert!(got.ratio <= want + 1e-12);
            if want >= SNIPPET_MATCH_THRESHOLD {
                prop_assert_eq!(got.ratio, want);
                let got_span = got.span.unwrap();
                // same score; the brute force also keeps the earliest start
                prop_assert_eq!(got_span.start, span.start);
            } else {
                prop_assert!(got.span.is_none());
            }
        }

        #[test]
        fn more_edits_never_raise_the_ratio(seed in proptest::collection::vec(0usize..40, 0..6)) {
            let base = "the quick brown fox jumps over the lazy dog while it sleeps";
            let body = format!("intro text. {base} outro text.");
            let mut snippet: Vec<char> = base.chars().collect();
            let mut last = 1.0;
            for &p in &seed {
                snippet[p] = '#';
                let r = fuzzy_match_snippet(&doc(&body), &snippet.iter().collect::<String>()).ratio;
                prop_assert!(r <= last + 1e-12);
                last = r;
            }
        }
    }
}
