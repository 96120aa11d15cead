//! Desk-scale streaming full-duplex audio-visual dialogue engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: the 25 Hz frame clock, vocabulary, and every rule that turns
//!   word timings and turn annotations into frame-aligned target streams.
//! * [`corpus`]: a synthetic dyadic conversation world with a parametric
//!   speech synthesizer and SNR-controlled mixing.
//! * [`frontend`]: toy acoustic tokenizer (16 codebooks) and lip-feature
//!   encoder producing the model's input grids.
//! * [`model`]: a small causal multi-stream transformer with hand-written
//!   backpropagation, cached streaming inference and two-stage training.
//! * [`pipeline`]: renders, corrupts and tokenizes the world into training
//!   and evaluation samples.
//! * [`orchestrator`]: the LISTENING/SPEAKING runtime and session traces.
//! * [`eval`]: WER, floor-transfer offsets, turn metrics, perplexity and
//!   SNR sweeps.
//! * [`app`]: the run configuration and the command implementations used by
//!   the `duplex` binary.
//! * [`recipes`]: a toy world and training schedule small enough to train
//!   and compare models on one CPU core.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod app;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod grid;
pub mod model;
pub mod orchestrator;
pub mod pipeline;
pub mod recipes;

pub use error::{Error, Result};
