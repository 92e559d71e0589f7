use std::collections::HashMap;
use std::path::Path;

use super::TextprepError;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const NUM_SPECIALS: usize = 4;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Word-level vocabulary. Ids 0..4 are reserved for the special tokens;
/// regular tokens are dense from 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// Lowercased whitespace tokens, the unit used by both the vocabulary and the tokenizer.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

impl Vocabulary {
    /// Builds a vocabulary from the words of `corpus`, most frequent first,
    /// ties broken lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[S], max_size: usize, min_freq: usize) -> Result<Self, TextprepError> {
        if corpus.is_empty() {
            return Err(TextprepError::EmptyCorpus);
        }
        if max_size < NUM_SPECIALS {
            return Err(TextprepError::VocabTooSmall(max_size));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus {
            for w in words(doc.as_ref()) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_freq.max(1)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        Ok(Self::from_regular(ranked.into_iter().map(|(t, _)| t)))
    }

    fn from_regular(regular: impl IntoIterator<Item = String>) -> Self {
        let tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).chain(regular).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied().filter(|&id| id as usize >= NUM_SPECIALS)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Regular tokens in id order.
    pub fn regular_tokens(&self) -> &[String] {
        &self.tokens[NUM_SPECIALS..]
    }

    /// One regular token per line; line `i` holds id `i + 4`.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for t in self.regular_tokens() {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self, TextprepError> {
        let mut seen = HashMap::new();
        let mut regular = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.split_whitespace().count() != 1 || line.trim() != line {
                return Err(TextprepError::VocabFormat { line: i + 1 });
            }
            if seen.insert(line.to_string(), i).is_some() || SPECIAL_TOKENS.contains(&line) {
                return Err(TextprepError::VocabFormat { line: i + 1 });
            }
            regular.push(line.to_string());
        }
        Ok(Self::from_regular(regular))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_file_string())
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = std::fs::read_to_string(path).map_err(|e| TextprepError::Io(format!("{}: {e}", path.display())))?;
        Self::from_file_string(&text)
    }
}
