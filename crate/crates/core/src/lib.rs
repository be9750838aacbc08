//! Desk-scale end-to-end child speech recognition pipeline.
//!
//! A self-contained Rust implementation of a joint CTC-attention
//! Transformer recognizer: synthetic corpus generation, log-mel + pitch
//! features, four data-augmentation methods, transfer learning from an
//! adult to a child domain, backoff n-gram and LSTM language models with
//! interpolation/fusion/rescoring, beam-search decoding and CER scoring.
//! All numerics are f64 and every stochastic stage is seed-pinned.

pub mod augment;
pub mod ctc;
pub mod decode;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod frontend;
pub mod lm;
pub mod score;
pub mod text;

pub use error::{Error, Result};
