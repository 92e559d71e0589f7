use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::EncoderError;
use crate::textprep::{Vocabulary, NUM_SPECIALS};

pub const WEIGHT_FORMAT: &str = "eventcat-encoder";
pub const WEIGHT_VERSION: u32 = 1;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale defaults: 2 layers, width 64, 4 heads, FFN 128, 128 positions.
    pub fn desk_scale(vocab_size: usize, seed: u64) -> Self {
        EncoderConfig { num_layers: 2, model_dim: 64, num_heads: 4, ffn_dim: 128, max_len: 128, vocab_size, seed }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [
            ("num_layers", self.num_layers),
            ("model_dim", self.model_dim),
            ("num_heads", self.num_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::Config(format!("{name} must be at least 1")));
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(EncoderError::Config(format!(
                "model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        Ok(())
    }
}

/// Per-head projections `W_i^Q`, `W_i^K`, `W_i^V`, each `d_model × d_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub heads: Vec<HeadWeights>,
    /// `h·d_v × d_model`
    pub w_o: Matrix,
    pub ffn_w1: Matrix,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Matrix,
    pub ffn_b2: Vec<f64>,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub token_embedding: Matrix,
    pub position_embedding: Matrix,
    pub layers: Vec<LayerWeights>,
}

impl EncoderWeights {
    /// Checks every shape against `config` and that all entries are finite.
    pub fn check(&self, config: &EncoderConfig) -> Result<(), EncoderError> {
        config.validate()?;
        let d = config.model_dim;
        let dk = config.head_dim();
        let mismatch = |what: &str, got: (usize, usize), want: (usize, usize)| {
            EncoderError::Shape(format!("{what}: {got:?}, expected {want:?}"))
        };
        let expect = |what: &str, m: &Matrix, want: (usize, usize)| -> Result<(), EncoderError> {
            if m.shape() != want || m.data.len() != want.0 * want.1 {
                return Err(mismatch(what, m.shape(), want));
            }
            if !m.is_finite() {
                return Err(EncoderError::Config(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        let expect_vec = |what: &str, v: &[f64], n: usize| -> Result<(), EncoderError> {
            if v.len() != n {
                return Err(mismatch(what, (1, v.len()), (1, n)));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EncoderError::Config(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        expect("token_embedding", &self.token_embedding, (config.vocab_size, d))?;
        expect("position_embedding", &self.position_embedding, (config.max_len, d))?;
        if self.layers.len() != config.num_layers {
            return Err(EncoderError::Shape(format!("{} layers, expected {}", self.layers.len(), config.num_layers)));
        }
        for layer in &self.layers {
            if layer.heads.len() != config.num_heads {
                return Err(EncoderError::Shape(format!("{} heads, expected {}", layer.heads.len(), config.num_heads)));
            }
            for head in &layer.heads {
                expect("w_q", &head.w_q, (d, dk))?;
                expect("w_k", &head.w_k, (d, dk))?;
                expect("w_v", &head.w_v, (d, dk))?;
            }
            expect("w_o", &layer.w_o, (config.num_heads * dk, d))?;
            expect("ffn_w1", &layer.ffn_w1, (d, config.ffn_dim))?;
            expect_vec("ffn_b1", &layer.ffn_b1, config.ffn_dim)?;
            expect("ffn_w2", &layer.ffn_w2, (config.ffn_dim, d))?;
            expect_vec("ffn_b2", &layer.ffn_b2, d)?;
            expect_vec("ln1_gain", &layer.ln1_gain, d)?;
            expect_vec("ln1_bias", &layer.ln1_bias, d)?;
            expect_vec("ln2_gain", &layer.ln2_gain, d)?;
            expect_vec("ln2_bias", &layer.ln2_bias, d)?;
        }
        Ok(())
    }
}

/// Seeded initialization: every matrix entry is drawn from `N(0, 1/√d_model)`
/// in a fixed order; layer-norm gains start at 1 and all biases at 0.
pub fn init_weights(config: &EncoderConfig) -> Result<EncoderWeights, EncoderError> {
    config.validate()?;
    let d = config.model_dim;
    let dk = config.head_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive std");
    let mut draw = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, cols, data)
    };
    let token_embedding = draw(config.vocab_size, d);
    let position_embedding = draw(config.max_len, d);
    let layers = (0..config.num_layers)
        .map(|_| {
            let heads = (0..config.num_heads)
                .map(|_| HeadWeights { w_q: draw(d, dk), w_k: draw(d, dk), w_v: draw(d, dk) })
                .collect();
            LayerWeights {
                heads,
                w_o: draw(config.num_heads * dk, d),
                ffn_w1: draw(d, config.ffn_dim),
                ffn_b1: vec![0.0; config.ffn_dim],
                ffn_w2: draw(config.ffn_dim, d),
                ffn_b2: vec![0.0; d],
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
            }
        })
        .collect();
    Ok(EncoderWeights { token_embedding, position_embedding, layers })
}

/// Versioned weight container: config, vocabulary and all matrices (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    pub format: String,
    pub version: u32,
    pub config: EncoderConfig,
    /// Regular vocabulary tokens; ids start after the special tokens.
    pub vocabulary: Vec<String>,
    pub weights: EncoderWeights,
}

impl EncoderModel {
    pub fn new(config: EncoderConfig, vocab: &Vocabulary, weights: EncoderWeights) -> Result<Self, EncoderError> {
        let model = EncoderModel {
            format: WEIGHT_FORMAT.to_string(),
            version: WEIGHT_VERSION,
            config,
            vocabulary: vocab.regular_tokens().to_vec(),
            weights,
        };
        model.check()?;
        Ok(model)
    }

    /// Seeded model over `vocab`; `vocab_size` in `config` is overwritten.
    pub fn initialize(mut config: EncoderConfig, vocab: &Vocabulary) -> Result<Self, EncoderError> {
        config.vocab_size = vocab.len();
        let weights = init_weights(&config)?;
        Self::new(config, vocab, weights)
    }

    fn check(&self) -> Result<(), EncoderError> {
        if self.format != WEIGHT_FORMAT || self.version != WEIGHT_VERSION {
            return Err(EncoderError::Config(format!(
                "unsupported weight container {} v{}",
                self.format, self.version
            )));
        }
        if self.vocabulary.len() + NUM_SPECIALS != self.config.vocab_size {
            return Err(EncoderError::Shape(format!(
                "vocabulary has {} entries, config expects {}",
                self.vocabulary.len() + NUM_SPECIALS,
                self.config.vocab_size
            )));
        }
        self.weights.check(&self.config)
    }

    pub fn vocabulary(&self) -> Result<Vocabulary, EncoderError> {
        let mut text = self.vocabulary.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        Vocabulary::from_file_string(&text).map_err(|e| EncoderError::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), EncoderError> {
        let text = serde_json::to_string(self).map_err(|e| EncoderError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EncoderError> {
        let text = std::fs::read_to_string(path).map_err(|e| EncoderError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, EncoderError> {
        let model: EncoderModel = serde_json::from_str(text).map_err(|e| EncoderError::Config(e.to_string()))?;
        model.check()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> EncoderConfig {
        EncoderConfig { num_layers: 1, model_dim: 4, num_heads: 2, ffn_dim: 6, max_len: 5, vocab_size: 7, seed }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(init_weights(&tiny(1)).unwrap(), init_weights(&tiny(1)).unwrap());
        assert_ne!(init_weights(&tiny(1)).unwrap(), init_weights(&tiny(2)).unwrap());
    }

    #[test]
    fn layer_norm_params_start_neutral() {
        let w = init_weights(&tiny(3)).unwrap();
        let l = &w.layers[0];
        assert!(l.ln1_gain.iter().chain(&l.ln2_gain).all(|&g| g == 1.0));
        assert!(l.ffn_b1.iter().chain(&l.ffn_b2).chain(&l.ln1_bias).all(|&b| b == 0.0));
        w.check(&tiny(3)).unwrap();
    }

    #[test]
    fn sample_mean_is_within_five_sigma() {
        let cfg = EncoderConfig { vocab_size: 10_000 / 16, model_dim: 16, num_heads: 4, ..tiny(11) };
        let w = init_weights(&cfg).unwrap();
        let entries = &w.token_embedding.data;
        assert_eq!(entries.len(), 10_000);
        let n = entries.len() as f64;
        let mean = entries.iter().sum::<f64>() / n;
        let sigma = 1.0 / (cfg.model_dim as f64).sqrt();
        assert!(mean.abs() < 5.0 * sigma / n.sqrt(), "mean {mean}");
        let var = entries.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var.sqrt() - sigma).abs() < 0.05 * sigma);
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig { num_heads: 3, ..tiny(0) }.validate().is_err());
        assert!(EncoderConfig { ffn_dim: 0, ..tiny(0) }.validate().is_err());
    }

    #[test]
    fn container_rejects_mismatches() {
        let vocab = Vocabulary::build(&["a b c"], 10, 1).unwrap();
        let model = EncoderModel::initialize(tiny(5), &vocab).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert_eq!(EncoderModel::from_json(&json).unwrap(), model);

        let mut bad = model.clone();
        bad.config.max_len = 9;
        assert!(matches!(EncoderModel::from_json(&serde_json::to_string(&bad).unwrap()), Err(EncoderError::Shape(_))));
        let mut bad = model.clone();
        bad.vocabulary.pop();
        assert!(EncoderModel::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
        let mut bad = model;
        bad.version = 99;
        assert!(EncoderModel::from_json(&serde_json::to_string(&bad).unwrap()).is_err());
    }
}
