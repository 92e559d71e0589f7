use super::attention::multi_head;
use super::matrix::Matrix;
use super::weights::{EncoderConfig, EncoderWeights, LayerWeights, LAYER_NORM_EPS};
use super::EncoderError;
use crate::textprep::TokenSequence;

/// `(x − mean) / √(var + ε) ⊙ gain + bias`, population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    x.iter().zip(gain.iter().zip(bias)).map(|(v, (g, b))| (v - mean) * inv * g + b).collect()
}

fn layer_norm_rows(x: &Matrix, gain: &[f64], bias: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(&layer_norm(x.row(r), gain, bias, LAYER_NORM_EPS));
    }
    out
}

/// Position-wise `ReLU(x W1 + b1) W2 + b2`.
pub fn feed_forward(x: &Matrix, layer: &LayerWeights) -> Matrix {
    let mut hidden = x.matmul(&layer.ffn_w1);
    hidden.add_row_vector(&layer.ffn_b1);
    let hidden = hidden.map(|v| v.max(0.0));
    let mut out = hidden.matmul(&layer.ffn_w2);
    out.add_row_vector(&layer.ffn_b2);
    out
}

/// Post-norm encoder block:
/// `A = LN(X + MultiHead(X))`, `X' = LN(A + FFN(A))`.
pub fn encoder_layer(x: &Matrix, layer: &LayerWeights, mask: &[u8]) -> Result<Matrix, EncoderError> {
    let attended = multi_head(x, layer, mask)?;
    let a = layer_norm_rows(&x.add(&attended), &layer.ln1_gain, &layer.ln1_bias);
    if layer.ffn_w1.rows != a.cols {
        return Err(EncoderError::Shape(format!("FFN input width {} vs {}", layer.ffn_w1.rows, a.cols)));
    }
    let ff = feed_forward(&a, layer);
    Ok(layer_norm_rows(&a.add(&ff), &layer.ln2_gain, &layer.ln2_bias))
}

/// Token plus learned positional embeddings for every position of `seq`.
pub fn embed(seq: &TokenSequence, weights: &EncoderWeights, config: &EncoderConfig) -> Result<Matrix, EncoderError> {
    if seq.ids.len() != seq.mask.len() {
        return Err(EncoderError::Shape("ids and mask lengths differ".into()));
    }
    if seq.ids.len() > config.max_len {
        return Err(EncoderError::Shape(format!(
            "sequence length {} exceeds max_len {}",
            seq.ids.len(),
            config.max_len
        )));
    }
    let d = config.model_dim;
    let mut x = Matrix::zeros(seq.ids.len(), d);
    for (pos, &id) in seq.ids.iter().enumerate() {
        if id as usize >= config.vocab_size {
            return Err(EncoderError::TokenOutOfRange { id, vocab_size: config.vocab_size });
        }
        let tok = weights.token_embedding.row(id as usize);
        let p = weights.position_embedding.row(pos);
        for (o, (a, b)) in x.row_mut(pos).iter_mut().zip(tok.iter().zip(p)) {
            *o = a + b;
        }
    }
    Ok(x)
}

/// Full hidden states after all layers.
pub fn hidden_states(
    seq: &TokenSequence,
    weights: &EncoderWeights,
    config: &EncoderConfig,
) -> Result<Matrix, EncoderError> {
    let mut x = embed(seq, weights, config)?;
    for layer in &weights.layers {
        x = encoder_layer(&x, layer, &seq.mask)?;
    }
    Ok(x)
}

/// Sentence vector: the final hidden state at the CLS position (row 0).
pub fn encode(seq: &TokenSequence, weights: &EncoderWeights, config: &EncoderConfig) -> Result<Vec<f64>, EncoderError> {
    let h = hidden_states(seq, weights, config)?;
    Ok(h.row(0).to_vec())
}
