//! Unified sequence formulation for geometry calculation and proving problems.
//!
//! The pipeline turns annotated proofs into index-encoded target sequences,
//! executes program sequences for calculation problems, builds expression and
//! masked-LM pretraining targets, trains a small encoder-decoder on the mixed
//! data, and scores answer accuracy and top-K proving accuracy.

pub mod corpus;
pub mod evaluator;
pub mod interpreter;
pub mod pipeline;
pub mod pretrain;
pub mod reformulator;
pub mod rng;
pub mod seqmodel;
pub mod synthetic;
pub mod tokenizer;
