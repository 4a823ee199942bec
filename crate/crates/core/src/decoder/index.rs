//! Token-level suffix automaton per document.
//!
//! Each state of the automaton is a class of substrings sharing the same set
//! of end positions, so "which tokens can extend the current match" is just
//! the outgoing transitions of the state the match has reached.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::docstore::Document;
use crate::syntax::MIN_QUOTE_TOKENS;
use crate::tokenizer::{is_reserved, TokenId, TokenSet, CONTEXT_WINDOW};

pub type StateId = u32;

const NO_LINK: u32 = u32::MAX;
const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("context documents hold {total} tokens, more than the {limit}-token window")]
    ContextOverflow { total: usize, limit: usize },
}

#[derive(Debug, Clone)]
struct Node {
    len: u32,
    link: u32,
    /// End index (inclusive) of the first occurrence of the strings in this state.
    first_end: u32,
    next: BTreeMap<TokenId, StateId>,
}

/// Is `t` a UTF-8 continuation byte token?
pub(crate) fn is_continuation(t: TokenId) -> bool {
    (0x80..=0xBF).contains(&t)
}

/// Suffix automaton over one document's tokens, plus the tables the
/// constrained decoder needs to avoid dead ends.
#[derive(Debug, Clone)]
pub struct DocIndex {
    tokens: Vec<TokenId>,
    nodes: Vec<Node>,
    /// A match ending in this state ends on a UTF-8 character boundary.
    complete: Vec<bool>,
    /// `min_ext[v][d]`: fewest further non-reserved tokens (at least `d`) that
    /// reach a boundary-complete state from `v`.
    min_ext: Vec<[u32; MIN_QUOTE_TOKENS + 1]>,
}

impl DocIndex {
    pub fn build(tokens: &[TokenId]) -> Self {
        let mut nodes = Vec::with_capacity(2 * tokens.len() + 1);
        nodes.push(Node {
            len: 0,
            link: NO_LINK,
            first_end: 0,
            next: BTreeMap::new(),
        });
        let mut last: u32 = 0;
        for (i, &c) in tokens.iter().enumerate() {
            let cur = nodes.len() as u32;
            nodes.push(Node {
                len: nodes[last as usize].len + 1,
                link: NO_LINK,
                first_end: i as u32,
                next: BTreeMap::new(),
            });
            let mut p = last;
            while p != NO_LINK && !nodes[p as usize].next.contains_key(&c) {
                nodes[p as usize].next.insert(c, cur);
                p = nodes[p as usize].link;
            }
            if p == NO_LINK {
                nodes[cur as usize].link = 0;
            } else {
                let q = nodes[p as usize].next[&c];
                if nodes[p as usize].len + 1 == nodes[q as usize].len {
                    nodes[cur as usize].link = q;
                } else {
                    let clone = nodes.len() as u32;
                    let mut cloned = nodes[q as usize].clone();
                    cloned.len = nodes[p as usize].len + 1;
                    nodes.push(cloned);
                    while p != NO_LINK && nodes[p as usize].next.get(&c) == Some(&q) {
                        nodes[p as usize].next.insert(c, clone);
                        p = nodes[p as usize].link;
                    }
                    nodes[q as usize].link = clone;
                    nodes[cur as usize].link = clone;
                }
            }
            last = cur;
        }

        let complete = nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                id != 0 && {
                    let after = n.first_end as usize + 1;
                    after >= tokens.len() || !is_continuation(tokens[after])
                }
            })
            .collect();

        let mut index = Self {
            tokens: tokens.to_vec(),
            nodes,
            complete,
            min_ext: Vec::new(),
        };
        index.compute_min_extensions();
        index
    }

    fn compute_min_extensions(&mut self) {
        // Transitions strictly increase `len`, so descending `len` is a
        // reverse topological order.
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(self.nodes[v].len));
        let mut table = vec![[UNREACHABLE; MIN_QUOTE_TOKENS + 1]; self.nodes.len()];
        for v in order {
            let mut row = [UNREACHABLE; MIN_QUOTE_TOKENS + 1];
            if self.complete[v] {
                row[0] = 0;
            }
            for (&c, &u) in &self.nodes[v].next {
                if is_reserved(c) {
                    continue;
                }
                let next = &table[u as usize];
                for (d, slot) in row.iter_mut().enumerate() {
                    let rest = next[d.saturating_sub(1)];
                    if rest != UNREACHABLE {
                        *slot = (*slot).min(rest + 1);
                    }
                }
            }
            table[v] = row;
        }
        self.min_ext = table;
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn root(&self) -> StateId {
        0
    }

    pub fn state_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn advance(&self, state: StateId, token: TokenId) -> Option<StateId> {
        self.nodes[state as usize].next.get(&token).copied()
    }

    /// Follows `seq` from the root; `None` if it is not a substring.
    pub fn walk(&self, seq: &[TokenId]) -> Option<StateId> {
        seq.iter().try_fold(self.root(), |s, &t| self.advance(s, t))
    }

    /// Tokens `t` such that (matched ++ t) occurs in the document.
    pub fn allowed_next(&self, state: StateId) -> TokenSet {
        self.nodes[state as usize].next.keys().copied().collect()
    }

    pub(crate) fn transitions(&self, state: StateId) -> impl Iterator<Item = (TokenId, StateId)> + '_ {
        self.nodes[state as usize].next.iter().map(|(&t, &s)| (t, s))
    }

    pub(crate) fn is_complete(&self, state: StateId) -> bool {
        self.complete[state as usize]
    }

    /// Fewest further tokens, at least `at_least`, that end the match on a
    /// character boundary without crossing a reserved token.
    pub(crate) fn min_extension(&self, state: StateId, at_least: usize) -> Option<usize> {
        let v = self.min_ext[state as usize][at_least.min(MIN_QUOTE_TOKENS)];
        (v != UNREACHABLE).then_some(v as usize)
    }

    /// Shortest admissible quote length in tokens, if the document has one.
    pub fn min_quote_tokens(&self) -> Option<usize> {
        self.transitions(self.root())
            .filter(|&(t, _)| !is_reserved(t) && !is_continuation(t))
            .filter_map(|(_, u)| self.min_extension(u, MIN_QUOTE_TOKENS - 1).map(|e| e + 1))
            .min()
    }
}

/// Substring indexes for every context document.
#[derive(Debug, Clone)]
pub struct SubstringIndex {
    docs: Vec<DocIndex>,
}

impl SubstringIndex {
    pub fn doc(&self, i: usize) -> &DocIndex {
        &self.docs[i]
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Allowed continuations of `matched` within document `doc`; empty if
    /// `matched` does not occur there.
    pub fn allowed_next(&self, doc: usize, matched: &[TokenId]) -> TokenSet {
        let d = &self.docs[doc];
        d.walk(matched).map(|s| d.allowed_next(s)).unwrap_or_default()
    }
}

/// Indexes the bodies of `docs`. Fails if they exceed the context window.
pub fn build_index(docs: &[Document]) -> Result<SubstringIndex, IndexError> {
    let total: usize = docs.iter().map(|d| d.tokens().len()).sum();
    if total > CONTEXT_WINDOW {
        return Err(IndexError::ContextOverflow {
            total,
            limit: CONTEXT_WINDOW,
        });
    }
    Ok(SubstringIndex {
        docs: docs.iter().map(|d| DocIndex::build(d.tokens())).collect(),
    })
}
