//! Pluggable autoregressive token model plus an add-k smoothed n-gram
//! reference implementation.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use thiserror::Error;

use crate::tokenizer::{TokenId, TokenSet, VOCAB_SIZE};

/// Anything that can score the next token given a prefix.
///
/// Implementations must be deterministic for a fixed prefix and return
/// exactly `VOCAB_SIZE` logits.
pub trait TokenModel: Send + Sync {
    fn next_logits(&self, prefix: &[TokenId]) -> Vec<f64>;
}

impl<M: TokenModel + ?Sized> TokenModel for &M {
    fn next_logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        (**self).next_logits(prefix)
    }
}

impl<M: TokenModel + ?Sized> TokenModel for Box<M> {
    fn next_logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        (**self).next_logits(prefix)
    }
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("sampling mask is empty")]
    EmptyMask,
    #[error("temperature must be finite and non-negative, got {0}")]
    InvalidTemperature(f64),
}

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not an n-gram model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u32>,
}

/// Add-k smoothed n-gram model over token ids.
///
/// Counts are kept for every context length below `order`, so a prefix
/// shorter than `order - 1` conditions on all of its tokens. A context never
/// seen in training backs off to its longest seen suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    smoothing: f64,
    contexts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Counts for the longest suffix of `prefix` (at most `order - 1`
    /// tokens) seen in training.
    fn counts(&self, prefix: &[TokenId]) -> Option<&ContextCounts> {
        let n = prefix.len().min(self.order - 1);
        (0..=n).rev().find_map(|len| self.contexts.get(&prefix[prefix.len() - len..]))
    }

    /// Smoothed conditional probability of `token` after `prefix`.
    pub fn probability(&self, prefix: &[TokenId], token: TokenId) -> f64 {
        let k = self.smoothing;
        let v = VOCAB_SIZE as f64;
        match self.counts(prefix) {
            Some(c) => {
                let n = c.next.get(&token).copied().unwrap_or(0) as f64;
                (n + k) / (c.total as f64 + k * v)
            }
            None => 1.0 / v,
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelFileError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u32::<LittleEndian>(self.order as u32)?;
        w.write_f64::<LittleEndian>(self.smoothing)?;
        w.write_u32::<LittleEndian>(VOCAB_SIZE as u32)?;
        let mut keys: Vec<&Vec<TokenId>> = self.contexts.keys().collect();
        keys.sort();
        w.write_u64::<LittleEndian>(keys.len() as u64)?;
        for key in keys {
            let counts = &self.contexts[key];
            w.write_u32::<LittleEndian>(key.len() as u32)?;
            for &t in key {
                w.write_u16::<LittleEndian>(t)?;
            }
            let mut next: Vec<(TokenId, u32)> = counts.next.iter().map(|(&t, &c)| (t, c)).collect();
            next.sort_unstable();
            w.write_u32::<LittleEndian>(next.len() as u32)?;
            for (t, c) in next {
                w.write_u16::<LittleEndian>(t)?;
                w.write_u32::<LittleEndian>(c)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelFileError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ModelFileError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != FORMAT_VERSION {
            return Err(ModelFileError::UnsupportedVersion(version));
        }
        let order = r.read_u32::<LittleEndian>()? as usize;
        let smoothing = r.read_f64::<LittleEndian>()?;
        if order == 0 || !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(ModelFileError::Corrupt("order or smoothing out of range"));
        }
        if r.read_u32::<LittleEndian>()? as usize != VOCAB_SIZE {
            return Err(ModelFileError::Corrupt("vocabulary size mismatch"));
        }
        let n_contexts = r.read_u64::<LittleEndian>()?;
        let mut contexts = HashMap::new();
        for _ in 0..n_contexts {
            let len = r.read_u32::<LittleEndian>()? as usize;
            if len >= order {
                return Err(ModelFileError::Corrupt("context longer than order - 1"));
            }
            let key = (0..len)
                .map(|_| r.read_u16::<LittleEndian>())
                .collect::<io::Result<Vec<_>>>()?;
            let n_next = r.read_u32::<LittleEndian>()?;
            let mut counts = ContextCounts::default();
            for _ in 0..n_next {
                let t = r.read_u16::<LittleEndian>()?;
                if t as usize >= VOCAB_SIZE {
                    return Err(ModelFileError::Corrupt("token id out of range"));
                }
                let c = r.read_u32::<LittleEndian>()?;
                counts.total += c as u64;
                counts.next.insert(t, c);
            }
            contexts.insert(key, counts);
        }
        Ok(Self {
            order,
            smoothing,
            contexts,
        })
    }
}

const MAGIC: &[u8; 8] = b"SQNGRAM\0";
const FORMAT_VERSION: u32 = 1;

impl TokenModel for NGramModel {
    fn next_logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        let k = self.smoothing;
        let v = VOCAB_SIZE as f64;
        match self.counts(prefix) {
            Some(c) => {
                let denom = (c.total as f64 + k * v).ln();
                let base = k.ln() - denom;
                let mut logits = vec![base; VOCAB_SIZE];
                for (&t, &n) in &c.next {
                    logits[t as usize] = (n as f64 + k).ln() - denom;
                }
                logits
            }
            None => vec![-v.ln(); VOCAB_SIZE],
        }
    }
}

/// Counts every n-gram of length `1..=order` in the corpus.
///
/// # Panics
/// If `order` is zero or `smoothing` is not positive.
pub fn train_ngram(corpus: &[Vec<TokenId>], order: usize, smoothing: f64) -> NGramModel {
    assert!(order >= 1, "n-gram order must be at least 1");
    assert!(smoothing > 0.0 && smoothing.is_finite(), "smoothing must be positive");
    let mut contexts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
    for seq in corpus {
        for i in 0..seq.len() {
            let start = i.saturating_sub(order - 1);
            let entry = contexts.entry(seq[start..i].to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(seq[i]).or_insert(0) += 1;
        }
    }
    NGramModel {
        order,
        smoothing,
        contexts,
    }
}

/// Draws one token from `model`'s distribution restricted to `mask`.
pub fn sample_token<R: Rng + ?Sized>(
    model: &dyn TokenModel,
    prefix: &[TokenId],
    mask: &TokenSet,
    temperature: f64,
    rng: &mut R,
) -> Result<TokenId, SamplingError> {
    let logits = model.next_logits(prefix);
    sample_from_logits(&logits, mask, temperature, rng)
}

/// Masked, temperature-scaled categorical draw. A temperature of zero picks
/// the masked argmax, breaking ties toward the smallest id.
pub fn sample_from_logits<R: Rng + ?Sized>(
    logits: &[f64],
    mask: &TokenSet,
    temperature: f64,
    rng: &mut R,
) -> Result<TokenId, SamplingError> {
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(SamplingError::InvalidTemperature(temperature));
    }
    if mask.is_empty() {
        return Err(SamplingError::EmptyMask);
    }
    if temperature == 0.0 {
        let mut best: Option<(TokenId, f64)> = None;
        for t in mask.iter() {
            let l = logits[t as usize];
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((t, l));
            }
        }
        return Ok(best.map(|(t, _)| t).unwrap_or(0));
    }
    let probs = masked_probabilities(logits, mask, temperature);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (t, p) in probs {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = t;
        if u < acc {
            return Ok(t);
        }
    }
    Ok(last)
}

/// Softmax of `logits / temperature` renormalised over `mask`.
///
/// If every masked logit is `-inf` the result is uniform over the mask.
pub fn masked_probabilities(logits: &[f64], mask: &TokenSet, temperature: f64) -> Vec<(TokenId, f64)> {
    let scaled: Vec<(TokenId, f64)> = mask
        .iter()
        .map(|t| (t, logits[t as usize] / temperature))
        .collect();
    let max = scaled.iter().map(|&(_, l)| l).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let p = 1.0 / scaled.len() as f64;
        return scaled.into_iter().map(|(t, _)| (t, p)).collect();
    }
    let weights: Vec<(TokenId, f64)> = scaled.into_iter().map(|(t, l)| (t, (l - max).exp())).collect();
    let z: f64 = weights.iter().map(|&(_, w)| w).sum();
    weights.into_iter().map(|(t, w)| (t, w / z)).collect()
}

/// Log-softmax over the full vocabulary.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}
