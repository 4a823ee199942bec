//! Inline evidence syntax: `%<claim>%(title)%[quote]%`.
//!
//! A response embeds the answer and its supporting quote in one string so that
//! a left-to-right model can emit both. Fields are matched non-greedily: the
//! first closing delimiter ends a field, and delimiters never nest.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::docstore::Document;
use crate::tokenizer::Tokenizer;

pub const OPEN_CLAIM: &str = "%<";
pub const CLOSE_CLAIM: &str = ">%";
pub const OPEN_TITLE: &str = "%(";
pub const CLOSE_TITLE: &str = ")%";
pub const OPEN_QUOTE: &str = "%[";
pub const CLOSE_QUOTE: &str = "]%";

/// The six reserved delimiters, in template order.
pub const DELIMITERS: [&str; 6] = [
    OPEN_CLAIM,
    CLOSE_CLAIM,
    OPEN_TITLE,
    CLOSE_TITLE,
    OPEN_QUOTE,
    CLOSE_QUOTE,
];

/// Quotes shorter than this many tokens are penalised as too short.
pub const MIN_QUOTE_TOKENS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("{field} contains the reserved delimiter `{delimiter}`")]
    DelimiterInField {
        field: Field,
        delimiter: &'static str,
    },
    #[error("unknown flattening template {0}; expected 0, 1 or 2")]
    UnknownTemplate(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Claim,
    Title,
    Quote,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::Claim => "claim",
            Field::Title => "title",
            Field::Quote => "quote",
        })
    }
}

/// Returns the first reserved delimiter occurring in `text`, if any.
pub fn find_delimiter(text: &str) -> Option<&'static str> {
    DELIMITERS
        .iter()
        .filter_map(|d| text.find(d).map(|pos| (pos, *d)))
        .min()
        .map(|(_, d)| d)
}

/// A parsed (claim, title, quote) triple together with its surface string.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InlineEvidenceResponse {
    claim: String,
    title: String,
    quote: String,
    raw: String,
}

impl InlineEvidenceResponse {
    pub fn new(
        claim: impl Into<String>,
        title: impl Into<String>,
        quote: impl Into<String>,
    ) -> Result<Self, SyntaxError> {
        let claim = claim.into();
        let title = title.into();
        let quote = quote.into();
        for (field, text) in [
            (Field::Claim, &claim),
            (Field::Title, &title),
            (Field::Quote, &quote),
        ] {
            if let Some(delimiter) = find_delimiter(text) {
                return Err(SyntaxError::DelimiterInField { field, delimiter });
            }
        }
        // adjacent delimiters share their `%`: `>%(` and `)%[`
        let raw = format!("{OPEN_CLAIM}{claim}{CLOSE_CLAIM}({title}{CLOSE_TITLE}[{quote}{CLOSE_QUOTE}");
        Ok(Self {
            claim,
            title,
            quote,
            raw,
        })
    }

    pub fn claim(&self) -> &str {
        &self.claim
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn quote(&self) -> &str {
        &self.quote
    }

    /// The full surface string, delimiters included.
    pub fn raw(&self) -> &str {
        &self.raw
    }
}

impl Serialize for InlineEvidenceResponse {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for InlineEvidenceResponse {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        parse_response(&raw)
            .responses
            .into_iter()
            .next()
            .ok_or_else(|| serde::de::Error::custom(format!("no inline evidence in {raw:?}")))
    }
}

/// Where and why parsing first failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseDiagnostic {
    /// Byte offset into the input.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    pub responses: Vec<InlineEvidenceResponse>,
    /// The first malformation encountered, if any.
    pub diagnostic: Option<ParseDiagnostic>,
}

impl ParseOutcome {
    /// The instance the pipeline consumes.
    pub fn first(&self) -> Option<&InlineEvidenceResponse> {
        self.responses.first()
    }
}

/// Parses every well-formed instance of the syntax in `raw`, in order.
pub fn parse_response(raw: &str) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    let mut cursor = 0;
    while let Some(rel) = raw[cursor..].find(OPEN_CLAIM) {
        let start = cursor + rel;
        match parse_instance(raw, start) {
            Ok((response, end)) => {
                outcome.responses.push(response);
                cursor = end;
            }
            Err(diagnostic) => {
                if outcome.diagnostic.is_none() {
                    outcome.diagnostic = Some(diagnostic);
                }
                cursor = start + OPEN_CLAIM.len();
            }
        }
    }
    if outcome.responses.is_empty() && outcome.diagnostic.is_none() {
        outcome.diagnostic = Some(ParseDiagnostic {
            offset: raw.len(),
            message: format!("no `{OPEN_CLAIM}` found"),
        });
    }
    outcome
}

fn parse_instance(raw: &str, start: usize) -> Result<(InlineEvidenceResponse, usize), ParseDiagnostic> {
    let mut pos = start + OPEN_CLAIM.len();
    let claim = take_field(raw, &mut pos, CLOSE_CLAIM)?;
    expect_open(raw, &mut pos, OPEN_TITLE)?;
    let title = take_field(raw, &mut pos, CLOSE_TITLE)?;
    expect_open(raw, &mut pos, OPEN_QUOTE)?;
    let quote = take_field(raw, &mut pos, CLOSE_QUOTE)?;
    let response = InlineEvidenceResponse {
        claim: claim.to_owned(),
        title: title.to_owned(),
        quote: quote.to_owned(),
        raw: raw[start..pos].to_owned(),
    };
    Ok((response, pos))
}

fn take_field<'a>(raw: &'a str, pos: &mut usize, close: &str) -> Result<&'a str, ParseDiagnostic> {
    let rest = &raw[*pos..];
    let Some(end) = rest.find(close) else {
        return Err(ParseDiagnostic {
            offset: raw.len(),
            message: format!("input ended before `{close}`"),
        });
    };
    let field = &rest[..end];
    if let Some(d) = find_delimiter(field) {
        return Err(ParseDiagnostic {
            offset: *pos + field.find(d).unwrap_or(0),
            message: format!("reserved delimiter `{d}` before `{close}`"),
        });
    }
    *pos += end + close.len();
    Ok(field)
}

/// Consumes an opening delimiter that follows a closing one. The `%` is
/// normally shared with the closer; the unshared form is accepted too.
fn expect_open(raw: &str, pos: &mut usize, delimiter: &str) -> Result<(), ParseDiagnostic> {
    let rest = &raw[*pos..];
    if rest.starts_with(delimiter) {
        *pos += delimiter.len();
        Ok(())
    } else if rest.starts_with(&delimiter[1..]) {
        *pos += delimiter.len() - 1;
        Ok(())
    } else {
        Err(ParseDiagnostic {
            offset: *pos,
            message: if *pos >= raw.len() {
                format!("input ended before `{delimiter}`")
            } else {
                format!("expected `{delimiter}`")
            },
        })
    }
}

/// Emits the surface string for a response.
pub fn serialize_response(resp: &InlineEvidenceResponse) -> Result<String, SyntaxError> {
    // Re-check in case the fields were built by hand in this module.
    InlineEvidenceResponse::new(resp.claim.as_str(), resp.title.as_str(), resp.quote.as_str())
        .map(|r| r.raw)
}

/// The six mechanically checkable defects of a response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Violation {
    MalformedQuote,
    WrongTitle,
    WrongQuote,
    EmptyClaim,
    EmptyQuote,
    ShortQuote,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: BTreeSet<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, v: Violation) -> bool {
        self.violations.contains(&v)
    }

    fn malformed() -> Self {
        Self {
            violations: BTreeSet::from([Violation::MalformedQuote]),
        }
    }
}

/// Checks a response against the documents it was generated from.
///
/// `WrongQuote` is only evaluated when the title resolves to at least one
/// document; a quote is accepted if it occurs in any document bearing that
/// title. An empty quote reports `EmptyQuote` but not `ShortQuote`.
pub fn validate_response(
    resp: &InlineEvidenceResponse,
    docs: &[Document],
    case_insensitive: bool,
) -> ValidationReport {
    let mut violations = BTreeSet::new();
    if [resp.claim(), resp.title(), resp.quote()]
        .iter()
        .any(|f| find_delimiter(f).is_some())
    {
        violations.insert(Violation::MalformedQuote);
    }
    if resp.claim().is_empty() {
        violations.insert(Violation::EmptyClaim);
    }
    if resp.quote().is_empty() {
        violations.insert(Violation::EmptyQuote);
    } else if Tokenizer::new().encode(resp.quote()).len() < MIN_QUOTE_TOKENS {
        violations.insert(Violation::ShortQuote);
    }

    let titled: Vec<&Document> = docs.iter().filter(|d| d.title() == resp.title()).collect();
    if titled.is_empty() {
        violations.insert(Violation::WrongTitle);
    } else {
        let found = titled.iter().any(|d| {
            if case_insensitive {
                d.body().to_lowercase().contains(&resp.quote().to_lowercase())
            } else {
                d.body().contains(resp.quote())
            }
        });
        if !found {
            violations.insert(Violation::WrongQuote);
        }
    }
    ValidationReport { violations }
}

/// Parses `raw` and validates its first instance; unparseable input is
/// reported as `MalformedQuote`.
pub fn validate_raw(raw: &str, docs: &[Document], case_insensitive: bool) -> ValidationReport {
    match parse_response(raw).first() {
        Some(resp) => validate_response(resp, docs, case_insensitive),
        None => ValidationReport::malformed(),
    }
}

/// Renders claim and evidence as a single forum-style post using one of
/// three fixed templates.
pub fn flatten_response(
    resp: &InlineEvidenceResponse,
    url: &str,
    template_id: usize,
) -> Result<String, SyntaxError> {
    let (claim, title, quote) = (resp.claim(), resp.title(), resp.quote());
    match template_id {
        0 => Ok(format!(
            "{claim}\n\nAccording to the page \"{title}\"[1]:\n{quote}\n\n[1] {url}"
        )),
        1 => Ok(format!(
            "{claim}\n\nSee this fragment from \"{title}\"[1]:\n{quote}\n\n[1] {url}"
        )),
        2 => Ok(format!(
            "{claim}\n\n\"{quote}\"\nSource: \"{title}\" [1]\n\n[1] {url}"
        )),
        other => Err(SyntaxError::UnknownTemplate(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCOOBY: &str = "%<A Great Dane dog.>%(Scooby-Doo)%[This Saturday-morning cartoon series featured teenagers Fred Jones, Daphne Blake, Velma Dinkley, and Shaggy Rogers, and their talking Great Dane named Scooby-Doo.]%";

    fn doc(title: &str, body: &str) -> Document {
        Document::new("d", title, "http://example.com", body)
    }

    #[test]
    fn parses_scooby_example() {
        let out = parse_response(SCOOBY);
        assert_eq!(out.responses.len(), 1);
        let r = &out.responses[0];
        assert_eq!(r.claim(), "A Great Dane dog.");
        assert_eq!(r.title(), "Scooby-Doo");
        assert!(r.quote().starts_with("This Saturday-morning"));
        assert_eq!(serialize_response(r).unwrap(), SCOOBY);
        assert!(out.diagnostic.is_none());
    }

    #[test]
    fn all_empty_fields_parse_and_fail_validation() {
        let out = parse_response("%<>%()%[]%");
        assert_eq!(out.responses.len(), 1);
        let r = &out.responses[0];
        assert_eq!((r.claim(), r.title(), r.quote()), ("", "", ""));
        let report = validate_response(r, &[doc("A", "body")], false);
        assert!(report.has(Violation::EmptyClaim));
        assert!(report.has(Violation::EmptyQuote));
        assert!(!report.has(Violation::ShortQuote));
    }

    #[test]
    fn incomplete_template_yields_diagnostic() {
        let out = parse_response("%<x>%(t)");
        assert!(out.responses.is_empty());
        let diag = out.diagnostic.unwrap();
        assert_eq!(diag.offset, 8);
    }

    #[test]
    fn plain_text_has_no_instances() {
        let out = parse_response("just words");
        assert!(out.responses.is_empty());
        assert!(out.diagnostic.is_some());
    }

    #[test]
    fn multiple_instances_in_order() {
        let s = "pre %<a>%(b)%[ccccc]% mid %<d>%(e)%[fffff]% post";
        let out = parse_response(s);
        let claims: Vec<_> = out.responses.iter().map(|r| r.claim()).collect();
        assert_eq!(claims, ["a", "d"]);
        assert_eq!(out.first().unwrap().raw(), "%<a>%(b)%[ccccc]%");
    }

    #[test]
    fn malformed_instance_is_skipped_with_diagnostic() {
        let s = "%<a%[b>%(t)%[q]% %<ok>%(t)%[quote]%";
        let out = parse_response(s);
        assert_eq!(out.responses.len(), 1);
        assert_eq!(out.responses[0].claim(), "ok");
        assert_eq!(out.diagnostic.unwrap().offset, 3);
    }

    #[test]
    fn serialize_substitutes_fields() {
        let r = InlineEvidenceResponse::new("a", "b", "cdefg").unwrap();
        assert_eq!(serialize_response(&r).unwrap(), "%<a>%(b)%[cdefg]%");
    }

    #[test]
    fn delimiter_in_field_is_rejected() {
        let err = InlineEvidenceResponse::new("x %[ y", "b", "c").unwrap_err();
        assert_eq!(
            err,
            SyntaxError::DelimiterInField {
                field: Field::Claim,
                delimiter: "%["
            }
        );
    }

    #[test]
    fn whitespace_is_preserved() {
        let r = InlineEvidenceResponse::new("  a \n", " t ", "\tq q q q\t").unwrap();
        let back = parse_response(r.raw()).responses.remove(0);
        assert_eq!(back, r);
    }

    #[test]
    fn boundary_characters_next_to_delimiters_round_trip() {
        for (c, t, q) in [("%", ")", "]"), (">", "%", "%"), ("<", "(", "[x]")] {
            let r = InlineEvidenceResponse::new(c, t, q).unwrap();
            assert_eq!(parse_response(r.raw()).responses, vec![r]);
        }
    }

    #[test]
    fn short_quote_is_flagged() {
        let d = doc("T", "abcd efgh");
        let r = InlineEvidenceResponse::new("c", "T", "abcd").unwrap();
        let report = validate_response(&r, &[d], false);
        assert_eq!(report.violations, BTreeSet::from([Violation::ShortQuote]));
    }

    #[test]
    fn exact_sentence_quote_is_ok() {
        let d = doc("T", "First one here. The cat sat on the mat. Last.");
        let r = InlineEvidenceResponse::new("claim", "T", "The cat sat on the mat.").unwrap();
        assert!(validate_response(&r, &[d], false).ok());
    }

    #[test]
    fn unmatched_title_only_reports_wrong_title() {
        let docs = [doc("A", "some body text"), doc("B", "other body text")];
        let r = InlineEvidenceResponse::new("c", "X", "some body").unwrap();
        let report = validate_response(&r, &docs, false);
        assert_eq!(report.violations, BTreeSet::from([Violation::WrongTitle]));
    }

    #[test]
    fn case_insensitive_quote_matching() {
        let d = doc("T", "The Cat Sat On The Mat");
        let r = InlineEvidenceResponse::new("c", "T", "the cat sat").unwrap();
        assert!(validate_response(&r, std::slice::from_ref(&d), false).has(Violation::WrongQuote));
        assert!(validate_response(&r, &[d], true).ok());
    }

    #[test]
    fn elision_marker_is_ordinary_text() {
        let d = doc("T", "alpha beta gamma delta epsilon");
        let r = InlineEvidenceResponse::new("c", "T", "alpha [...] epsilon").unwrap();
        assert!(validate_response(&r, &[d], false).has(Violation::WrongQuote));
    }

    #[test]
    fn unparseable_raw_is_malformed() {
        let report = validate_raw("%<a>%(b", &[doc("b", "x")], false);
        assert_eq!(report.violations, BTreeSet::from([Violation::MalformedQuote]));
    }

    #[test]
    fn flatten_templates() {
        let r = InlineEvidenceResponse::new("C", "T", "Q").unwrap();
        assert_eq!(
            flatten_response(&r, "U", 0).unwrap(),
            "C\n\nAccording to the page \"T\"[1]:\nQ\n\n[1] U"
        );
        assert_eq!(
            flatten_response(&r, "U", 1).unwrap(),
            "C\n\nSee this fragment from \"T\"[1]:\nQ\n\n[1] U"
        );
        assert_eq!(
            flatten_response(&r, "U", 2).unwrap(),
            "C\n\n\"Q\"\nSource: \"T\" [1]\n\n[1] U"
        );
        assert_eq!(flatten_response(&r, "U", 7), Err(SyntaxError::UnknownTemplate(7)));
    }

    proptest::proptest! {
        #[test]
        fn parse_inverts_serialize(
            claim in "[a%<>()\\[\\] ]{0,12}",
            title in "[a%<>()\\[\\] ]{0,12}",
            quote in "[a%<>()\\[\\] ]{0,12}",
        ) {
            if let Ok(r) = InlineEvidenceResponse::new(claim, title, quote) {
                let raw = serialize_response(&r).unwrap();
                let out = parse_response(&raw);
                proptest::prop_assert_eq!(out.responses.len(), 1, "{:?}", raw);
                proptest::prop_assert_eq!(&out.responses[0], &r);
            }
        }
    }
}
