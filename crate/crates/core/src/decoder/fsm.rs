//! Seven-state machine that decides which tokens may come next.
//!
//! Claims are free text; titles must spell a context document's title; quotes
//! must be a contiguous span of the document the title names. On top of the
//! syntactic rules every mask only offers tokens from which a complete,
//! valid response still fits in the remaining token budget, so a sampler
//! that starts from a feasible state never dead-ends.

use thiserror::Error;

use super::index::{build_index, is_continuation, IndexError, StateId, SubstringIndex};
use crate::docstore::Document;
use crate::syntax::MIN_QUOTE_TOKENS;
use crate::tokenizer::{
    is_reserved, TokenId, TokenSet, CLOSE_CLAIM_ID, CLOSE_QUOTE_ID, CLOSE_TITLE_ID, OPEN_CLAIM_ID,
    OPEN_QUOTE_ID, OPEN_TITLE_ID, SAMPLE_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Phase {
    Start,
    WithinClaim,
    EndedClaim,
    WithinTitle,
    EndedTitle,
    WithinQuote,
    EndedQuote,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("token {token} is not allowed in state {phase:?}")]
    IllegalTransition { phase: Phase, token: TokenId },
}

/// Incremental UTF-8 validator for free-text claim bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Utf8Cursor {
    pending: u8,
    lo: u8,
    hi: u8,
}

impl Default for Utf8Cursor {
    fn default() -> Self {
        Self {
            pending: 0,
            lo: 0x80,
            hi: 0xBF,
        }
    }
}

impl Utf8Cursor {
    fn accept(self, b: u8) -> Option<Self> {
        if self.pending > 0 {
            return (self.lo..=self.hi).contains(&b).then_some(Self {
                pending: self.pending - 1,
                ..Self::default()
            });
        }
        let (pending, lo, hi) = match b {
            0x00..=0x7F => (0, 0x80, 0xBF),
            0xC2..=0xDF => (1, 0x80, 0xBF),
            0xE0 => (2, 0xA0, 0xBF),
            0xE1..=0xEC | 0xEE..=0xEF => (2, 0x80, 0xBF),
            0xED => (2, 0x80, 0x9F),
            0xF0 => (3, 0x90, 0xBF),
            0xF1..=0xF3 => (3, 0x80, 0xBF),
            0xF4 => (3, 0x80, 0x8F),
            _ => return None,
        };
        Some(Self { pending, lo, hi })
    }
}

/// Byte pairs that would spell a delimiter in the surface string.
fn forms_delimiter(prev: u8, next: u8) -> bool {
    matches!(
        (prev, next),
        (b'%', b'<') | (b'%', b'(') | (b'%', b'[') | (b'>', b'%') | (b')', b'%') | (b']', b'%')
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerState {
    phase: Phase,
    /// Tokens emitted so far in this session.
    emitted: usize,
    claim_len: usize,
    claim_last: Option<u8>,
    utf8: Utf8Cursor,
    title: Vec<TokenId>,
    bound_doc: Option<usize>,
    quote_state: StateId,
    quote_len: usize,
}

impl SamplerState {
    pub fn start() -> Self {
        Self {
            phase: Phase::Start,
            emitted: 0,
            claim_len: 0,
            claim_last: None,
            utf8: Utf8Cursor::default(),
            title: Vec::new(),
            bound_doc: None,
            quote_state: 0,
            quote_len: 0,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn emitted(&self) -> usize {
        self.emitted
    }

    /// Document the quote is bound to, once the title is closed.
    pub fn bound_doc(&self) -> Option<usize> {
        self.bound_doc
    }

    pub fn title_tokens(&self) -> &[TokenId] {
        &self.title
    }

    pub fn quote_len(&self) -> usize {
        self.quote_len
    }

    fn enter_claim(&mut self) {
        self.phase = Phase::WithinClaim;
        self.claim_len = 0;
        self.claim_last = None;
        self.utf8 = Utf8Cursor::default();
        self.title.clear();
        self.bound_doc = None;
        self.quote_state = 0;
        self.quote_len = 0;
    }
}

/// Everything the state machine needs to know about the context documents.
#[derive(Debug, Clone)]
pub struct DecodingContext {
    index: SubstringIndex,
    titles: Vec<Vec<TokenId>>,
    /// Tokens needed from `%[` through `]%` for each document, or `None` if
    /// the title cannot be cited (reserved tokens in it, or no admissible quote).
    tail_cost: Vec<Option<usize>>,
    max_tokens: usize,
}

impl DecodingContext {
    pub fn new(docs: &[Document]) -> Result<Self, IndexError> {
        Self::with_budget(docs, SAMPLE_BUDGET)
    }

    pub fn with_budget(docs: &[Document], max_tokens: usize) -> Result<Self, IndexError> {
        let index = build_index(docs)?;
        let titles: Vec<Vec<TokenId>> = docs.iter().map(|d| d.title_tokens()).collect();
        let tail_cost = (0..docs.len())
            .map(|i| {
                if titles[i].is_empty() || titles[i].iter().any(|&t| is_reserved(t)) {
                    return None;
                }
                index.doc(i).min_quote_tokens().map(|q| q + 2)
            })
            .collect();
        Ok(Self {
            index,
            titles,
            tail_cost,
            max_tokens,
        })
    }

    pub fn index(&self) -> &SubstringIndex {
        &self.index
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    fn remaining(&self, state: &SamplerState) -> usize {
        self.max_tokens.saturating_sub(state.emitted)
    }

    /// Fewest tokens to finish from `%(` onward through `]%`.
    fn min_evidence_cost(&self) -> Option<usize> {
        (0..self.titles.len())
            .filter_map(|i| self.tail_cost[i].map(|tail| 1 + self.titles[i].len() + 1 + tail))
            .min()
    }

    /// Fewest tokens a whole response needs, counting the opening `%<`.
    pub fn min_response_cost(&self) -> Option<usize> {
        // `%<`, one claim byte, `>%`, then the evidence
        self.min_evidence_cost().map(|e| 3 + e)
    }

    /// First document whose title equals `title` and can still be quoted
    /// within `remaining` tokens after `)%`.
    fn bindable_doc(&self, title: &[TokenId], remaining: usize) -> Option<usize> {
        (0..self.titles.len()).find(|&i| {
            self.titles[i] == title && self.tail_cost[i].is_some_and(|tail| tail <= remaining)
        })
    }

    pub fn allowed_mask(&self, state: &SamplerState) -> TokenSet {
        let remaining = self.remaining(state);
        match state.phase {
            Phase::Start | Phase::EndedQuote => TokenSet::all(),
            Phase::WithinClaim => self.claim_mask(state, remaining),
            Phase::EndedClaim => match self.min_evidence_cost() {
                Some(cost) if cost <= remaining => TokenSet::singleton(OPEN_TITLE_ID),
                _ => TokenSet::empty(),
            },
            Phase::WithinTitle => self.title_mask(state, remaining),
            Phase::EndedTitle => match state.bound_doc {
                Some(d) if self.tail_cost[d].is_some_and(|c| c <= remaining) => {
                    TokenSet::singleton(OPEN_QUOTE_ID)
                }
                _ => TokenSet::empty(),
            },
            Phase::WithinQuote => self.quote_mask(state, remaining),
        }
    }

    fn claim_mask(&self, state: &SamplerState, remaining: usize) -> TokenSet {
        let mut mask = TokenSet::empty();
        let Some(evidence) = self.min_evidence_cost() else {
            return mask;
        };
        if state.claim_len > 0 && state.utf8.pending == 0 && evidence < remaining {
            mask.insert(CLOSE_CLAIM_ID);
        }
        for b in 0..=255u8 {
            let Some(next) = state.utf8.accept(b) else {
                continue;
            };
            if state.claim_last.is_some_and(|prev| forms_delimiter(prev, b)) {
                continue;
            }
            if 1 + next.pending as usize + 1 + evidence <= remaining {
                mask.insert(b as TokenId);
            }
        }
        mask
    }

    fn title_mask(&self, state: &SamplerState, remaining: usize) -> TokenSet {
        let mut mask = TokenSet::empty();
        let p = state.title.len();
        if self.bindable_doc(&state.title, remaining.saturating_sub(1)).is_some() && remaining >= 1 {
            mask.insert(CLOSE_TITLE_ID);
        }
        for (i, title) in self.titles.iter().enumerate() {
            let Some(tail) = self.tail_cost[i] else {
                continue;
            };
            if title.len() > p && title[..p] == state.title[..] && (title.len() - p) + 1 + tail <= remaining {
                mask.insert(title[p]);
            }
        }
        mask
    }

    fn quote_mask(&self, state: &SamplerState, remaining: usize) -> TokenSet {
        let mut mask = TokenSet::empty();
        let Some(d) = state.bound_doc else {
            return mask;
        };
        let doc = self.index.doc(d);
        if state.quote_len >= MIN_QUOTE_TOKENS && doc.is_complete(state.quote_state) && remaining >= 1 {
            mask.insert(CLOSE_QUOTE_ID);
        }
        // room for content tokens before the closing `]%`
        let room = remaining.saturating_sub(1);
        let still_needed = MIN_QUOTE_TOKENS.saturating_sub(state.quote_len + 1);
        for (t, u) in doc.transitions(state.quote_state) {
            if is_reserved(t) || (state.quote_len == 0 && is_continuation(t)) {
                continue;
            }
            if doc.min_extension(u, still_needed).is_some_and(|ext| ext < room) {
                mask.insert(t);
            }
        }
        mask
    }

    /// Applies `token`, rejecting anything outside the current mask.
    pub fn step(&self, state: &SamplerState, token: TokenId) -> Result<SamplerState, FsmError> {
        if !self.allowed_mask(state).contains(token) {
            return Err(FsmError::IllegalTransition {
                phase: state.phase,
                token,
            });
        }
        Ok(self.advance(state, token))
    }

    /// Applies a token already known to be in the mask.
    pub(crate) fn advance(&self, state: &SamplerState, token: TokenId) -> SamplerState {
        let mut next = state.clone();
        next.emitted += 1;
        match state.phase {
            Phase::Start | Phase::EndedQuote => {
                if token == OPEN_CLAIM_ID {
                    next.enter_claim();
                }
            }
            Phase::WithinClaim => {
                if token == CLOSE_CLAIM_ID {
                    next.phase = Phase::EndedClaim;
                } else {
                    let b = token as u8;
                    next.utf8 = state.utf8.accept(b).unwrap_or_default();
                    next.claim_last = Some(b);
                    next.claim_len += 1;
                }
            }
            Phase::EndedClaim => next.phase = Phase::WithinTitle,
            Phase::WithinTitle => {
                if token == CLOSE_TITLE_ID {
                    let remaining = self.max_tokens.saturating_sub(next.emitted);
                    next.bound_doc = self
                        .bindable_doc(&state.title, remaining)
                        .or_else(|| self.titles.iter().position(|t| *t == state.title));
                    next.phase = Phase::EndedTitle;
                } else {
                    next.title.push(token);
                }
            }
            Phase::EndedTitle => {
                next.phase = Phase::WithinQuote;
                next.quote_state = 0;
                next.quote_len = 0;
            }
            Phase::WithinQuote => {
                if token == CLOSE_QUOTE_ID {
                    next.phase = Phase::EndedQuote;
                } else if let Some(d) = state.bound_doc {
                    next.quote_state = self.index.doc(d).advance(state.quote_state, token).unwrap_or(0);
                    next.quote_len += 1;
                }
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Tokenizer;

    fn ctx(docs: &[(&str, &str)]) -> DecodingContext {
        let docs: Vec<Document> = docs
            .iter()
            .enumerate()
            .map(|(i, (t, b))| Document::new(i.to_string(), *t, "", *b))
            .collect();
        DecodingContext::new(&docs).unwrap()
    }

    fn feed(ctx: &DecodingContext, state: SamplerState, text: &str) -> SamplerState {
        Tokenizer::new()
            .encode(text)
            .into_iter()
            .fold(state, |s, t| ctx.step(&s, t).unwrap_or_else(|e| panic!("{e} after {s:?}")))
    }

    #[test]
    fn transitions_follow_template_order() {
        let c = ctx(&[("Scooby-Doo", "A talking Great Dane named Scooby-Doo.")]);
        let s = c.step(&SamplerState::start(), OPEN_CLAIM_ID).unwrap();
        assert_eq!(s.phase(), Phase::WithinClaim);
        let s = feed(&c, s, "a dog");
        assert_eq!(s.phase(), Phase::WithinClaim);
        let s = feed(&c, s, ">%");
        assert_eq!(s.phase(), Phase::EndedClaim);
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(OPEN_TITLE_ID));
        let s = feed(&c, s, "%(Scooby-Doo");
        assert_eq!(s.phase(), Phase::WithinTitle);
        assert!(c.allowed_mask(&s).contains(CLOSE_TITLE_ID));
        let s = feed(&c, s, ")%");
        assert_eq!((s.phase(), s.bound_doc()), (Phase::EndedTitle, Some(0)));
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(OPEN_QUOTE_ID));
        let s = feed(&c, s, "%[Grea");
        assert_eq!(s.quote_len(), 4);
        assert!(!c.allowed_mask(&s).contains(CLOSE_QUOTE_ID));
        let s = feed(&c, s, "t");
        assert!(c.allowed_mask(&s).contains(CLOSE_QUOTE_ID));
        let s = feed(&c, s, "]%");
        assert_eq!(s.phase(), Phase::EndedQuote);
        assert_eq!(c.allowed_mask(&s), TokenSet::all());
        let s = c.step(&s, OPEN_CLAIM_ID).unwrap();
        assert_eq!(s.phase(), Phase::WithinClaim);
    }

    #[test]
    fn start_allows_everything_and_stays_put_on_text() {
        let c = ctx(&[("T", "some document text")]);
        let s = SamplerState::start();
        assert_eq!(c.allowed_mask(&s), TokenSet::all());
        let s = c.step(&s, b'x' as TokenId).unwrap();
        assert_eq!(s.phase(), Phase::Start);
    }

    #[test]
    fn title_mask_tracks_prefixes() {
        let c = ctx(&[("Scooby", "first body text here"), ("Scooby-Doo", "second body text")]);
        let s = feed(&c, SamplerState::start(), "%<c>%%(Scooby");
        let mask = c.allowed_mask(&s);
        assert!(mask.contains(CLOSE_TITLE_ID));
        assert!(mask.contains(b'-' as TokenId));
        assert_eq!(mask.len(), 2);
        let s = feed(&c, s, "-");
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(b'D' as TokenId));
        let s = feed(&c, s, "Doo)%");
        assert_eq!(s.bound_doc(), Some(1));
    }

    #[test]
    fn illegal_tokens_are_rejected() {
        let c = ctx(&[("T", "alpha beta gamma")]);
        let s = feed(&c, SamplerState::start(), "%<c>%");
        assert_eq!(
            c.step(&s, b'x' as TokenId),
            Err(FsmError::IllegalTransition {
                phase: Phase::EndedClaim,
                token: b'x' as TokenId
            })
        );
        let s = feed(&c, s, "%(T)%%[");
        // 'z' never occurs in the document
        assert!(c.step(&s, b'z' as TokenId).is_err());
        // delimiters cannot appear inside a claim
        let s = feed(&c, SamplerState::start(), "%<c");
        assert!(c.step(&s, OPEN_QUOTE_ID).is_err());
        let s = feed(&c, SamplerState::start(), "%<c%");
        assert!(c.step(&s, b'[' as TokenId).is_err());
    }

    #[test]
    fn empty_claim_cannot_close() {
        let c = ctx(&[("T", "alpha beta gamma")]);
        let s = feed(&c, SamplerState::start(), "%<");
        assert!(!c.allowed_mask(&s).contains(CLOSE_CLAIM_ID));
    }

    #[test]
    fn quote_only_extends_once_started() {
        let c = ctx(&[("T", "abcde xyzzy")]);
        let s = feed(&c, SamplerState::start(), "%<c>%%(T)%%[");
        let fresh = c.allowed_mask(&s);
        // fresh quote may start at any token that still leaves room for 5
        assert!(fresh.contains(b'a' as TokenId) && fresh.contains(b'x' as TokenId));
        let s = feed(&c, s, "ab");
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(b'c' as TokenId));
    }

    #[test]
    fn quote_avoids_dead_ends_near_document_end() {
        let c = ctx(&[("T", "abcdefg")]);
        let s = feed(&c, SamplerState::start(), "%<c>%%(T)%%[");
        // starting at 'd' leaves only "defg", too short
        let mask = c.allowed_mask(&s);
        assert_eq!(mask, b"abc".iter().copied().map(TokenId::from).collect());
    }

    #[test]
    fn multibyte_quotes_end_on_character_boundaries() {
        let c = ctx(&[("T", "aaaaé")]);
        let s = feed(&c, SamplerState::start(), "%<c>%%(T)%%[");
        let mask = c.allowed_mask(&s);
        assert!(!mask.contains(0xA9));
        let s = feed(&c, s, "aaaa");
        let s = c.step(&s, 0xC3).unwrap();
        // five tokens matched but the character is incomplete
        assert!(!c.allowed_mask(&s).contains(CLOSE_QUOTE_ID));
        let s = c.step(&s, 0xA9).unwrap();
        assert!(c.allowed_mask(&s).contains(CLOSE_QUOTE_ID));
    }

    #[test]
    fn budget_forces_claim_to_close() {
        let docs = [Document::new("0", "T", "", "abcde")];
        // %< + claim + >% + %( T )% %[ abcde ]% = 3 + claim + 9
        let c = DecodingContext::with_budget(&docs, 13).unwrap();
        assert_eq!(c.min_response_cost(), Some(13));
        let s = feed(&c, SamplerState::start(), "%<x");
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(CLOSE_CLAIM_ID));
    }

    #[test]
    fn unquotable_titles_are_never_offered() {
        let c = ctx(&[("Bad", "abc"), ("Good", "long enough text")]);
        let s = feed(&c, SamplerState::start(), "%<c>%%(");
        assert_eq!(c.allowed_mask(&s), TokenSet::singleton(b'G' as TokenId));
    }

    #[test]
    fn every_token_is_either_allowed_or_rejected() {
        let c = ctx(&[("T", "the cat sat on the mat")]);
        let states = [
            SamplerState::start(),
            feed(&c, SamplerState::start(), "%<ab"),
            feed(&c, SamplerState::start(), "%<ab>%"),
            feed(&c, SamplerState::start(), "%<ab>%%("),
            feed(&c, SamplerState::start(), "%<ab>%%(T)%"),
            feed(&c, SamplerState::start(), "%<ab>%%(T)%%[the c"),
            feed(&c, SamplerState::start(), "%<ab>%%(T)%%[the c]%"),
        ];
        for s in &states {
            let mask = c.allowed_mask(s);
            for t in 0..crate::tokenizer::VOCAB_SIZE as TokenId {
                assert_eq!(c.step(s, t).is_ok(), mask.contains(t));
            }
        }
    }
}
