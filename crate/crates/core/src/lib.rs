//! Instrument-family classification under audio-effect augmentation.
//!
//! The crate covers the whole experiment: WAV I/O and the fixed 4 s clip
//! contract ([`audio_io`]), seven augmentation effects with separate
//! train/test parameterizations ([`effects`]), 80-band log-mel features
//! ([`features`]), a single-layer vertical-filter CNN with exact
//! backpropagation and Adam ([`nn`]), and the training/evaluation pipeline
//! with its experiment grid ([`pipeline`]).

pub mod audio_io;
pub mod effects;
pub mod error;
pub mod features;
pub mod nn;
pub mod pipeline;

pub use error::{Error, Result};
