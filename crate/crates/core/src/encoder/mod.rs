//! Transformer encoder forward pass: scaled dot-product attention,
//! multi-head self-attention, post-norm residual blocks with a ReLU
//! feed-forward network, and CLS pooling.
//!
//! Weights are frozen after seeded initialization (or loaded from a weight
//! container); nothing in this module trains.

mod attention;
mod layer;
mod matrix;
mod weights;

use thiserror::Error;

pub use attention::{attention_weights, masked_softmax, multi_head, scaled_dot_attention, softmax};
pub use layer::{embed, encode, encoder_layer, feed_forward, hidden_states, layer_norm};
pub use matrix::Matrix;
pub use weights::{
    init_weights, EncoderConfig, EncoderModel, EncoderWeights, HeadWeights, LayerWeights, LAYER_NORM_EPS,
    WEIGHT_FORMAT, WEIGHT_VERSION,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("attention has no attendable key position")]
    NoAttendablePosition,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },
    #[error("invalid encoder configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl EncoderModel {
    /// Tokenizes `text` with the embedded vocabulary and returns the CLS vector.
    pub fn encode_text(&self, text: &str, vocab: &crate::textprep::Vocabulary) -> Result<Vec<f64>, EncoderError> {
        let seq = crate::textprep::tokenize(text, vocab, self.config.max_len)
            .map_err(|e| EncoderError::Config(e.to_string()))?;
        encode(&seq, &self.weights, &self.config)
    }
}
