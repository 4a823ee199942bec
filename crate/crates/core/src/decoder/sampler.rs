use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use super::fsm::{DecodingContext, Phase, SamplerState};
use super::index::IndexError;
use crate::docstore::{build_prompt, Document, DocstoreError};
use crate::syntax::{parse_response, InlineEvidenceResponse};
use crate::token_model::{log_softmax, sample_from_logits, SamplingError, TokenModel};
use crate::tokenizer::{TokenId, Tokenizer, CLOSE_CLAIM_ID, OPEN_CLAIM_ID, SAMPLE_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub temperature: f64,
    pub max_tokens: usize,
    pub max_retries: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: SAMPLE_BUDGET,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("sampling dead-ended on every one of {attempts} attempts")]
    DeadEnd { attempts: usize },
    #[error("no context documents")]
    NoDocuments,
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Prompt(#[from] DocstoreError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// One step of a sampling session, for the optional debug stream.
#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub attempt: usize,
    pub step: usize,
    pub phase: Phase,
    pub token: TokenId,
    pub mask_size: usize,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub response: InlineEvidenceResponse,
    /// Emitted tokens, starting with `%<` and ending with `]%`.
    pub tokens: Vec<TokenId>,
    /// Unmasked model log-probability of each emitted token.
    pub log_probs: Vec<f64>,
    /// Index of the document the quote was drawn from.
    pub doc_index: usize,
    pub attempts: usize,
    pub trace: Vec<TraceStep>,
}

impl Sample {
    pub fn log_prob(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    /// Number of leading tokens up to and including `>%`.
    pub fn claim_token_count(&self) -> usize {
        self.tokens
            .iter()
            .position(|&t| t == CLOSE_CLAIM_ID)
            .map_or(self.tokens.len(), |p| p + 1)
    }
}

/// A reusable constrained sampler for one prompt and document set.
pub struct ConstrainedSampler<'m> {
    model: &'m dyn TokenModel,
    ctx: DecodingContext,
    prompt: Vec<TokenId>,
    config: SampleConfig,
    trace: bool,
}

impl<'m> ConstrainedSampler<'m> {
    pub fn new(
        model: &'m dyn TokenModel,
        docs: &[Document],
        question: &str,
        config: SampleConfig,
    ) -> Result<Self, DecodeError> {
        if docs.is_empty() {
            return Err(DecodeError::NoDocuments);
        }
        let prompt = build_prompt(question, docs)?;
        let ctx = DecodingContext::with_budget(docs, config.max_tokens)?;
        Ok(Self {
            model,
            ctx,
            prompt: Tokenizer::new().encode(&prompt),
            config,
            trace: false,
        })
    }

    /// Record per-step traces in returned samples.
    pub fn with_trace(mut self, on: bool) -> Self {
        self.trace = on;
        self
    }

    pub fn context(&self) -> &DecodingContext {
        &self.ctx
    }

    pub fn prompt_tokens(&self) -> &[TokenId] {
        &self.prompt
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Sample, DecodeError> {
        let attempts = self.config.max_retries + 1;
        let mut trace = Vec::new();
        for attempt in 0..attempts {
            if let Some(mut sample) = self.attempt(attempt, rng, &mut trace)? {
                sample.attempts = attempt + 1;
                sample.trace = trace;
                return Ok(sample);
            }
        }
        Err(DecodeError::DeadEnd { attempts })
    }

    fn attempt<R: Rng + ?Sized>(
        &self,
        attempt: usize,
        rng: &mut R,
        trace: &mut Vec<TraceStep>,
    ) -> Result<Option<Sample>, DecodeError> {
        let mut prefix = self.prompt.clone();
        let mut tokens = Vec::new();
        let mut log_probs = Vec::new();
        let mut state = SamplerState::start();
        while state.phase() != Phase::EndedQuote {
            if state.emitted() >= self.config.max_tokens {
                return Ok(None);
            }
            // The session always opens a response immediately after the prompt.
            let mask = if state.phase() == Phase::Start {
                crate::tokenizer::TokenSet::singleton(OPEN_CLAIM_ID)
            } else {
                self.ctx.allowed_mask(&state)
            };
            if mask.is_empty() {
                return Ok(None);
            }
            let logits = self.model.next_logits(&prefix);
            let token = sample_from_logits(&logits, &mask, self.config.temperature, rng)?;
            if self.trace {
                trace.push(TraceStep {
                    attempt,
                    step: tokens.len(),
                    phase: state.phase(),
                    token,
                    mask_size: mask.len(),
                });
            }
            log_probs.push(log_softmax(&logits)[token as usize]);
            state = self.ctx.advance(&state, token);
            prefix.push(token);
            tokens.push(token);
        }
        let raw = Tokenizer::new()
            .decode(&tokens)
            .expect("constrained tokens always decode to UTF-8");
        let parsed = parse_response(&raw)
            .responses
            .into_iter()
            .next()
            .expect("constrained tokens always parse");
        let response = InlineEvidenceResponse::new(parsed.claim(), parsed.title(), parsed.quote())
            .expect("constrained fields never hold delimiters");
        Ok(Some(Sample {
            response,
            tokens,
            log_probs,
            doc_index: state.bound_doc().unwrap_or(0),
            attempts: 0,
            trace: Vec::new(),
        }))
    }
}

/// Draws one response whose quote is a verbatim span of the document named
/// by its title.
pub fn constrained_sample<R: Rng + ?Sized>(
    model: &dyn TokenModel,
    docs: &[Document],
    question: &str,
    config: SampleConfig,
    rng: &mut R,
) -> Result<Sample, DecodeError> {
    ConstrainedSampler::new(model, docs, question, config)?.sample(rng)
}

/// Sum of log-probabilities of `continuation` given `context`, token by token.
pub fn sequence_log_prob(model: &dyn TokenModel, context: &[TokenId], continuation: &[TokenId]) -> f64 {
    let mut prefix = context.to_vec();
    let mut total = 0.0;
    for &t in continuation {
        total += log_softmax(&model.next_logits(&prefix))[t as usize];
        prefix.push(t);
    }
    total
}
