//! Two-step named entity recognition: an entity-agnostic, question-framed span
//! detector followed by a question-framed span classifier.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation: the BIOE codec and CoNLL text format, a WordPiece tokenizer,
//! orthographic pattern features, a small tape-based autodiff engine, the
//! model variants, training loops and mention-level scoring. File IO, timing
//! and the command line live in the `splitner` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
mod error;
pub mod features;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod subword;

pub use error::{Error, Result};
