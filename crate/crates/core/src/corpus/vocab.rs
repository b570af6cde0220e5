use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{KiError, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const MASK: u32 = 2;
pub const BOS: u32 = 3;
pub const EOS: u32 = 4;
/// Number of reserved ids at the bottom of every vocabulary.
pub const NUM_SPECIALS: usize = 5;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<mask>", "<bos>", "<eos>"];

/// Word-level token table. Ids are dense and the five specials always occupy
/// ids 0..5 in the order PAD, UNK, MASK, BOS, EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from an ordered list of regular (non-special) tokens.
    pub fn from_tokens<I, S>(regular: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(regular.into_iter().map(Into::into));
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(KiError::FormatError(format!(
                    "token {i} ({tok:?}) is empty or contains whitespace"
                )));
            }
            if id_of.insert(tok.clone(), i as u32).is_some() {
                return Err(KiError::FormatError(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocab { tokens, id_of })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    /// Id of a whitespace-delimited word, falling back to UNK.
    pub fn encode_word(&self, word: &str) -> u32 {
        self.id(word).unwrap_or(UNK)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.encode_word(w)).collect()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < NUM_SPECIALS
    }

    /// File contents: one token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the serialized vocabulary; identifies it in corpus headers.
    pub fn hash_hex(&self) -> String {
        hex_digest(self.to_file_string().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < NUM_SPECIALS {
            return Err(KiError::FormatError(
                "vocabulary file has fewer than 5 lines".into(),
            ));
        }
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if lines[i] != *special {
                return Err(KiError::FormatError(format!(
                    "line {i} must be {special}, found {:?}",
                    lines[i]
                )));
            }
        }
        Vocab::from_tokens(lines[NUM_SPECIALS..].iter().copied())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| KiError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| KiError::io(path, e))?;
        Vocab::parse(&text)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Keeps the `vocab_size - 5` most frequent whitespace-delimited words.
/// Frequency ties are broken lexicographically.
pub fn build_vocab<I, S>(documents: I, vocab_size: usize) -> Result<Vocab>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if vocab_size <= NUM_SPECIALS {
        return Err(KiError::Config(format!(
            "vocab_size must be >= {}, got {vocab_size}",
            NUM_SPECIALS + 1
        )));
    }
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for doc in documents {
        for word in doc.as_ref().split_whitespace() {
            total += 1;
            if SPECIAL_TOKENS.contains(&word) {
                continue;
            }
            *counts.entry(word.to_string()).or_insert(0) += 1;
        }
    }
    if total == 0 {
        return Err(KiError::EmptyCorpus("no tokens in document stream".into()));
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(vocab_size - NUM_SPECIALS);
    Vocab::from_tokens(ranked.into_iter().map(|(w, _)| w))
}
