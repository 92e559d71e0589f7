use super::matrix::Matrix;
use super::weights::LayerWeights;
use super::EncoderError;

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax restricted to positions with `mask[j] == 1`; masked positions get
/// weight exactly zero and never enter the sum.
pub fn masked_softmax(scores: &[f64], mask: &[u8]) -> Result<Vec<f64>, EncoderError> {
    debug_assert_eq!(scores.len(), mask.len());
    let max = scores.iter().zip(mask).filter(|(_, &m)| m == 1).map(|(&s, _)| s).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(EncoderError::NoAttendablePosition);
    }
    let mut weights = vec![0.0; scores.len()];
    let mut sum = 0.0;
    for (j, (&s, &m)) in scores.iter().zip(mask).enumerate() {
        if m == 1 {
            let e = (s - max).exp();
            weights[j] = e;
            sum += e;
        }
    }
    for (w, &m) in weights.iter_mut().zip(mask) {
        if m == 1 {
            *w /= sum;
        }
    }
    Ok(weights)
}

/// Attention weights `softmax(Q Kᵀ / √d_k)` row by row, masked over keys.
pub fn attention_weights(q: &Matrix, k: &Matrix, mask: &[u8]) -> Result<Matrix, EncoderError> {
    if q.cols != k.cols {
        return Err(EncoderError::Shape(format!("query width {} vs key width {}", q.cols, k.cols)));
    }
    if mask.len() != k.rows {
        return Err(EncoderError::Shape(format!("mask length {} vs {} keys", mask.len(), k.rows)));
    }
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut weights = Matrix::zeros(q.rows, k.rows);
    let mut scores = vec![0.0; k.rows];
    for r in 0..q.rows {
        let qr = q.row(r);
        for (j, s) in scores.iter_mut().enumerate() {
            *s = if mask[j] == 1 {
                qr.iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale
            } else {
                f64::NEG_INFINITY
            };
        }
        let w = masked_softmax(&scores, mask)?;
        weights.row_mut(r).copy_from_slice(&w);
    }
    Ok(weights)
}

/// `Attention(Q, K, V) = softmax(Q Kᵀ / √d_k) V` with key masking.
pub fn scaled_dot_attention(q: &Matrix, k: &Matrix, v: &Matrix, mask: &[u8]) -> Result<Matrix, EncoderError> {
    if k.rows != v.rows {
        return Err(EncoderError::Shape(format!("{} keys vs {} values", k.rows, v.rows)));
    }
    let weights = attention_weights(q, k, mask)?;
    let mut out = Matrix::zeros(q.rows, v.cols);
    for r in 0..q.rows {
        let w = weights.row(r);
        let out_row = out.row_mut(r);
        for j in 0..v.rows {
            if mask[j] != 1 {
                continue;
            }
            for (o, &x) in out_row.iter_mut().zip(v.row(j)) {
                *o += w[j] * x;
            }
        }
    }
    Ok(out)
}

/// Multi-head self-attention: `Concat(head_1..head_h) W^O`, each head
/// attending over its own projections `X W_i^Q`, `X W_i^K`, `X W_i^V`.
pub fn multi_head(x: &Matrix, layer: &LayerWeights, mask: &[u8]) -> Result<Matrix, EncoderError> {
    let d_model = layer.w_o.cols;
    if x.cols != d_model {
        return Err(EncoderError::Shape(format!("input width {} vs model width {d_model}", x.cols)));
    }
    if mask.len() != x.rows {
        return Err(EncoderError::Shape(format!("mask length {} vs {} positions", mask.len(), x.rows)));
    }
    let heads = layer
        .heads
        .iter()
        .map(|h| {
            let q = x.matmul(&h.w_q);
            let k = x.matmul(&h.w_k);
            let v = x.matmul(&h.w_v);
            scaled_dot_attention(&q, &k, &v, mask)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let concat = Matrix::hconcat(&heads);
    if concat.cols != layer.w_o.rows {
        return Err(EncoderError::Shape(format!(
            "concatenated heads width {} vs W^O rows {}",
            concat.cols, layer.w_o.rows
        )));
    }
    Ok(concat.matmul(&layer.w_o))
}
