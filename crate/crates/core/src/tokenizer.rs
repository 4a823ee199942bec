//! Byte-level tokenizer with the six syntax delimiters as reserved tokens.
//!
//! Ids `0..256` are raw bytes, ids `256..262` are the delimiters in template
//! order. Encoding is greedy left to right, so two adjacent byte tokens in an
//! encoded sequence never spell a delimiter.

use thiserror::Error;

use crate::syntax::DELIMITERS;

pub type TokenId = u16;

pub const BYTE_TOKENS: usize = 256;
pub const VOCAB_SIZE: usize = BYTE_TOKENS + DELIMITERS.len();

pub const OPEN_CLAIM_ID: TokenId = 256;
pub const CLOSE_CLAIM_ID: TokenId = 257;
pub const OPEN_TITLE_ID: TokenId = 258;
pub const CLOSE_TITLE_ID: TokenId = 259;
pub const OPEN_QUOTE_ID: TokenId = 260;
pub const CLOSE_QUOTE_ID: TokenId = 261;

/// Hard cap on prompt plus sample length.
pub const CONTEXT_WINDOW: usize = 4096;
/// Tokens reserved for the sampled answer.
pub const SAMPLE_BUDGET: usize = 256;
/// Tokens available to the prompt.
pub const PROMPT_BUDGET: usize = CONTEXT_WINDOW - SAMPLE_BUDGET;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenizerError {
    #[error("unknown token id {0}")]
    UnknownId(u32),
    #[error("decoded bytes are not valid UTF-8")]
    InvalidUtf8,
}

pub fn is_reserved(token: TokenId) -> bool {
    (token as usize) >= BYTE_TOKENS && (token as usize) < VOCAB_SIZE
}

/// Surface text of a token.
pub fn token_bytes(token: TokenId) -> &'static [u8] {
    static BYTES: [[u8; 1]; 256] = {
        let mut table = [[0u8; 1]; 256];
        let mut i = 0;
        while i < 256 {
            table[i][0] = i as u8;
            i += 1;
        }
        table
    };
    if is_reserved(token) {
        DELIMITERS[token as usize - BYTE_TOKENS].as_bytes()
    } else {
        &BYTES[token as usize & 0xff]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub fn new() -> Self {
        Tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        VOCAB_SIZE
    }

    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            if let Some(id) = reserved_at(bytes, i) {
                out.push(id);
                i += 2;
            } else {
                out.push(bytes[i] as TokenId);
                i += 1;
            }
        }
        out
    }

    /// Number of tokens `text` encodes to, without allocating.
    pub fn count(&self, text: &str) -> usize {
        let bytes = text.as_bytes();
        let mut n = 0;
        let mut i = 0;
        while i < bytes.len() {
            i += if reserved_at(bytes, i).is_some() { 2 } else { 1 };
            n += 1;
        }
        n
    }

    pub fn decode_bytes(&self, tokens: &[TokenId]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if t as usize >= VOCAB_SIZE {
                return Err(TokenizerError::UnknownId(t as u32));
            }
            out.extend_from_slice(token_bytes(t));
        }
        Ok(out)
    }

    pub fn decode(&self, tokens: &[TokenId]) -> Result<String, TokenizerError> {
        String::from_utf8(self.decode_bytes(tokens)?).map_err(|_| TokenizerError::InvalidUtf8)
    }
}

fn reserved_at(bytes: &[u8], i: usize) -> Option<TokenId> {
    let pair = bytes.get(i..i + 2)?;
    DELIMITERS
        .iter()
        .position(|d| d.as_bytes() == pair)
        .map(|k| (BYTE_TOKENS + k) as TokenId)
}

/// A fixed-size set of token ids.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TokenSet {
    words: [u64; VOCAB_SIZE.div_ceil(64)],
}

impl TokenSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        let mut s = Self::empty();
        for t in 0..VOCAB_SIZE {
            s.insert(t as TokenId);
        }
        s
    }

    pub fn singleton(t: TokenId) -> Self {
        let mut s = Self::empty();
        s.insert(t);
        s
    }

    pub fn insert(&mut self, t: TokenId) {
        let t = t as usize;
        debug_assert!(t < VOCAB_SIZE);
        self.words[t / 64] |= 1 << (t % 64);
    }

    pub fn remove(&mut self, t: TokenId) {
        let t = t as usize;
        if t < VOCAB_SIZE {
            self.words[t / 64] &= !(1 << (t % 64));
        }
    }

    pub fn contains(&self, t: TokenId) -> bool {
        let t = t as usize;
        t < VOCAB_SIZE && self.words[t / 64] & (1 << (t % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..VOCAB_SIZE as TokenId).filter(move |&t| self.contains(t))
    }
}

impl FromIterator<TokenId> for TokenSet {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        let mut s = Self::empty();
        for t in iter {
            s.insert(t);
        }
        s
    }
}

impl std::fmt::Debug for TokenSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_round_trip() {
        let tok = Tokenizer::new();
        assert!(tok.encode("").is_empty());
        assert_eq!(tok.decode(&[]).unwrap(), "");
    }

    #[test]
    fn delimiters_are_single_tokens() {
        let tok = Tokenizer::new();
        for (k, d) in DELIMITERS.iter().enumerate() {
            assert_eq!(tok.encode(d), vec![(BYTE_TOKENS + k) as TokenId]);
        }
        assert_eq!(tok.encode("%<"), vec![OPEN_CLAIM_ID]);
    }

    #[test]
    fn greedy_left_to_right() {
        let tok = Tokenizer::new();
        // ">%<" takes ">%" first, leaving a lone '<'.
        assert_eq!(tok.encode(">%<"), vec![CLOSE_CLAIM_ID, b'<' as TokenId]);
        assert_eq!(tok.encode("%%<"), vec![b'%' as TokenId, OPEN_CLAIM_ID]);
    }

    #[test]
    fn decode_rejects_unknown_ids() {
        assert_eq!(
            Tokenizer::new().decode(&[1, 999]),
            Err(TokenizerError::UnknownId(999))
        );
    }

    #[test]
    fn count_matches_encode() {
        let tok = Tokenizer::new();
        let s = "a%<b>%%(c)%%[d]%]%";
        assert_eq!(tok.count(s), tok.encode(s).len());
    }

    #[test]
    fn token_set_ops() {
        let mut s = TokenSet::empty();
        assert!(s.is_empty());
        s.insert(3);
        s.insert(261);
        assert_eq!(s.len(), 2);
        assert!(s.contains(261) && !s.contains(4));
        s.remove(3);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![261]);
        assert_eq!(TokenSet::all().len(), VOCAB_SIZE);
    }

    proptest! {
        #[test]
        fn random_bytes_round_trip(bytes in proptest::collection::vec(any::<u8>(), 0..1024)) {
            let tok = Tokenizer::new();
            let ids = tok.encode_bytes(&bytes);
            prop_assert_eq!(tok.decode_bytes(&ids).unwrap(), bytes);
            // no two adjacent byte tokens spell a delimiter
            for w in ids.windows(2) {
                if !is_reserved(w[0]) && !is_reserved(w[1]) {
                    let pair = [w[0] as u8, w[1] as u8];
                    prop_assert!(!DELIMITERS.iter().any(|d| d.as_bytes() == pair));
                }
            }
        }

        #[test]
        fn text_round_trip(s in ".{0,200}") {
            let tok = Tokenizer::new();
            prop_assert_eq!(tok.decode(&tok.encode(&s)).unwrap(), s);
        }
    }
}
