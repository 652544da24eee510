//! Corpus-creation pipeline for speech training data: normalize transcripts,
//! align them against a first-pass hypothesis, cut validated segments, and
//! emit a reproducible manifest.

pub mod align_graph;
pub mod chunk_match;
pub mod evaluator;
pub mod metadata;
pub mod pipeline;
pub mod segmenter;
pub mod sw_align;
pub mod synth;
pub mod textnorm;
pub mod validator;
