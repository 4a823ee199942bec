//! Constrained decoding: quotes are forced to be verbatim spans of a context
//! document, and titles to match a context title exactly.

mod fsm;
mod index;
mod sampler;

pub use fsm::{DecodingContext, FsmError, Phase, SamplerState};
pub use index::{build_index, DocIndex, IndexError, StateId, SubstringIndex};
pub use sampler::{
    constrained_sample, sequence_log_prob, ConstrainedSampler, DecodeError, Sample, SampleConfig,
    TraceStep,
};
