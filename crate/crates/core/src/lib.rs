//! Self-supported question answering: answers that carry a verbatim quote
//! from a retrieved page, decoded under constraints that guarantee the quote
//! exists.

pub mod baselines;
pub mod decoder;
pub mod docstore;
pub mod pipeline;
pub mod preference;
pub mod syntax;
pub mod text;
pub mod token_model;
pub mod tokenizer;
