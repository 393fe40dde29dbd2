//! Layer-conductance positional importance profiling for autoregressive
//! language models.
//!
//! The library slides a fixed-length word window over a text, attributes each
//! window's greedy next-token prediction to the window's tokens through every
//! transformer layer (path-integrated conductance at the residual stream),
//! normalizes and aggregates the scores to surface words, and assembles the
//! per-(layer, word, relative-position) scores into a dense tensor. Analyses
//! over that tensor produce positional importance profiles, primacy/recency
//! fractions, cross-text consistency correlations, position-averaged word
//! importance grouped by part of speech, and layer-dominance tables.
//!
//! Modules:
//! - [`corpus`]: text ingestion, cleaning, scrambled controls, POS tagging
//! - [`model`]: language-model backends (tokenization with word alignment,
//!   greedy prediction, path evaluations for conductance)
//! - [`attribution`]: conductance quadrature, per-layer normalization,
//!   subword-to-word aggregation
//! - [`windowing`]: sliding-window planning, tensor assembly, tensor file IO
//! - [`analysis`]: profiles, bias metrics, consistency, POS importance,
//!   layer dominance
//! - [`verification`]: the self-contained reference-model oracle suite backing
//!   `poscond verify`

pub mod analysis;
pub mod attribution;
pub mod corpus;
pub mod model;
pub mod testing;
pub mod verification;
pub mod windowing;
