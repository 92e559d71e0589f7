use serde::{Deserialize, Serialize};

use super::vocab::{words, Vocabulary, CLS, PAD, SEP, UNK};
use super::TextprepError;

/// Fixed-length token ids with the attention mask (1 = real token).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of real tokens, CLS and SEP included.
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// `[CLS] w1 .. wk [SEP] [PAD]..` with `k = min(words, max_len - 2)`.
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Result<TokenSequence, TextprepError> {
    if max_len < 3 {
        return Err(TextprepError::MaxLenTooSmall(max_len));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS);
    ids.extend(words(text).take(max_len - 2).map(|w| vocab.id(&w).unwrap_or(UNK)));
    ids.push(SEP);
    let real = ids.len();
    ids.resize(max_len, PAD);
    let mut mask = vec![1u8; real];
    mask.resize(max_len, 0);
    Ok(TokenSequence { ids, mask })
}

/// Inverse of [`tokenize`] up to UNK: real token names with specials removed.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> Vec<String> {
    seq.ids
        .iter()
        .zip(&seq.mask)
        .filter(|(&id, &m)| m == 1 && id != CLS && id != SEP)
        .map(|(&id, _)| vocab.token(id).unwrap_or("[UNK]").to_string())
        .collect()
}
