//! Keyword-planned emotional reply generation: corpus handling, the
//! generation pipeline (planner, clause decoder, editor), the reward stack,
//! and maximum-likelihood plus policy-gradient training.

pub mod asyncdec;
pub mod config;
pub mod corpus;
pub mod editor;
pub mod emoclf;
pub mod error;
pub mod fit;
pub mod lda;
pub mod lexicon;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod policy;
pub mod reward;
pub mod seq2seq;
pub mod skeleton;
pub mod synth;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
