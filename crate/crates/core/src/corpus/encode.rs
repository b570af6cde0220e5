use std::collections::HashSet;

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::vocab::{hex_digest, Vocab, EOS};
use crate::error::{KiError, Result};
use crate::rng::{keyed2, stream};

/// Every `VALID_EVERY`-th sequence after shuffling goes to validation (199:1).
pub const VALID_EVERY: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub seq_id: u64,
    pub split: Split,
    pub domain: String,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub sequences: Vec<Sequence>,
    /// Non-fatal conditions noticed while building, e.g. an empty valid split.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EncodeOptions {
    pub seq_len: usize,
    pub seed: u64,
    pub domain: String,
    /// First sequence id; give corpora that will later be mixed disjoint ranges.
    pub id_base: u64,
}

impl EncodeOptions {
    pub fn new(seq_len: usize, seed: u64) -> Self {
        EncodeOptions {
            seq_len,
            seed,
            domain: "default".into(),
            id_base: 0,
        }
    }

    pub fn domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }

    pub fn id_base(mut self, id_base: u64) -> Self {
        self.id_base = id_base;
        self
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn train(&self) -> impl Iterator<Item = &Sequence> {
        self.sequences.iter().filter(|s| s.split == Split::Train)
    }

    pub fn valid(&self) -> impl Iterator<Item = &Sequence> {
        self.sequences.iter().filter(|s| s.split == Split::Valid)
    }

    pub fn num_train(&self) -> usize {
        self.train().count()
    }

    pub fn num_valid(&self) -> usize {
        self.valid().count()
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.len() * self.seq_len
    }

    pub fn domains(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for s in &self.sequences {
            if !seen.contains(&s.domain) {
                seen.push(s.domain.clone());
            }
        }
        seen
    }

    fn with_sequences(&self, sequences: Vec<Sequence>) -> Corpus {
        Corpus {
            vocab_hash: self.vocab_hash.clone(),
            vocab_size: self.vocab_size,
            seq_len: self.seq_len,
            sequences,
            warnings: Vec::new(),
        }
    }

    /// Sequences tagged with `domain`, both splits.
    pub fn filter_domain(&self, domain: &str) -> Corpus {
        self.with_sequences(
            self.sequences
                .iter()
                .filter(|s| s.domain == domain)
                .cloned()
                .collect(),
        )
    }

    /// SHA-256 (hex) over vocabulary hash, sequence ids, splits, domains and tokens.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.vocab_hash.as_bytes());
        h.update((self.seq_len as u64).to_le_bytes());
        for s in &self.sequences {
            h.update(s.seq_id.to_le_bytes());
            h.update(s.split.as_str().as_bytes());
            h.update(s.domain.as_bytes());
            h.update([0u8]);
            for id in &s.ids {
                h.update(id.to_le_bytes());
            }
        }
        hex_digest(&h.finalize())
    }

    /// Only the validation sequences.
    pub fn valid_only(&self) -> Corpus {
        self.with_sequences(self.valid().cloned().collect())
    }

    /// Keeps the first `ceil(n_train / denom)` train sequences and every valid one.
    pub fn train_fraction(&self, denom: usize) -> Corpus {
        let keep = self.num_train().div_ceil(denom.max(1));
        let mut kept = 0;
        let seqs = self
            .sequences
            .iter()
            .filter(|s| {
                if s.split == Split::Valid {
                    return true;
                }
                kept += 1;
                kept <= keep
            })
            .cloned()
            .collect();
        self.with_sequences(seqs)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.sequences.len());
        for s in &self.sequences {
            if !ids.insert(s.seq_id) {
                return Err(KiError::DuplicateSeqId(s.seq_id));
            }
            if s.ids.len() != self.seq_len {
                return Err(KiError::FormatError(format!(
                    "sequence {} has length {}, expected {}",
                    s.seq_id,
                    s.ids.len(),
                    self.seq_len
                )));
            }
            if let Some(&bad) = s.ids.iter().find(|&&t| t as usize >= self.vocab_size) {
                return Err(KiError::VocabMismatch(format!(
                    "sequence {} holds id {bad} >= vocab size {}",
                    s.seq_id, self.vocab_size
                )));
            }
        }
        Ok(())
    }
}

/// Tokenizes, packs into fixed-length sequences (documents separated by EOS,
/// the trailing remainder dropped), shuffles by seed and assigns every 200th
/// sequence to the validation split.
pub fn encode_corpus<I, S>(documents: I, vocab: &Vocab, opts: &EncodeOptions) -> Result<Corpus>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if opts.seq_len < 2 {
        return Err(KiError::Config(format!(
            "seq_len must be >= 2, got {}",
            opts.seq_len
        )));
    }
    if opts.domain.is_empty() || opts.domain.contains(char::is_whitespace) {
        return Err(KiError::Config(format!(
            "domain tag {:?} must be non-empty without whitespace",
            opts.domain
        )));
    }
    let mut stream_ids: Vec<u32> = Vec::new();
    for doc in documents {
        let doc = doc.as_ref();
        if doc.split_whitespace().next().is_none() {
            continue;
        }
        stream_ids.extend(doc.split_whitespace().map(|w| vocab.encode_word(w)));
        stream_ids.push(EOS);
    }
    let n = stream_ids.len() / opts.seq_len;
    if n == 0 {
        return Err(KiError::EmptyCorpus(format!(
            "{} tokens is shorter than one sequence of {}",
            stream_ids.len(),
            opts.seq_len
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut keyed2(opts.seed, stream::SHUFFLE, 0));
    let sequences = order
        .iter()
        .enumerate()
        .map(|(rank, &chunk)| Sequence {
            seq_id: opts.id_base + chunk as u64,
            split: if (rank + 1) % VALID_EVERY == 0 {
                Split::Valid
            } else {
                Split::Train
            },
            domain: opts.domain.clone(),
            ids: stream_ids[chunk * opts.seq_len..(chunk + 1) * opts.seq_len].to_vec(),
        })
        .collect();
    let mut warnings = Vec::new();
    if n < VALID_EVERY {
        warnings.push(format!(
            "only {n} sequences: validation split is empty (needs >= {VALID_EVERY})"
        ));
    }
    Ok(Corpus {
        vocab_hash: vocab.hash_hex(),
        vocab_size: vocab.len(),
        seq_len: opts.seq_len,
        sequences,
        warnings,
    })
}

/// Samples train sequences without replacement from both corpora so the
/// output train split holds them in `ratio_a : ratio_b`, limited by the
/// scarcer side. All validation sequences of both inputs are kept.
pub fn mix_domains(
    a: &Corpus,
    b: &Corpus,
    ratio_a: usize,
    ratio_b: usize,
    seed: u64,
) -> Result<Corpus> {
    if a.vocab_hash != b.vocab_hash || a.vocab_size != b.vocab_size {
        return Err(KiError::VocabMismatch(
            "corpora were encoded with different vocabularies".into(),
        ));
    }
    if a.seq_len != b.seq_len {
        return Err(KiError::VocabMismatch(format!(
            "sequence lengths differ: {} vs {}",
            a.seq_len, b.seq_len
        )));
    }
    match (ratio_a, ratio_b) {
        (0, 0) => return Err(KiError::Config("both mixing ratios are zero".into())),
        (_, 0) => return Ok(a.clone()),
        (0, _) => return Ok(b.clone()),
        _ => {}
    }
    let train_a: Vec<&Sequence> = a.train().collect();
    let train_b: Vec<&Sequence> = b.train().collect();
    let units = (train_a.len() / ratio_a).min(train_b.len() / ratio_b);
    let mut rng = keyed2(seed, stream::MIX, 0);
    let mut pick = |pool: Vec<&Sequence>, count: usize| -> Vec<Sequence> {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(count);
        idx.sort_unstable();
        idx.into_iter().map(|i| pool[i].clone()).collect()
    };
    let mut train = pick(train_a, units * ratio_a);
    train.extend(pick(train_b, units * ratio_b));
    train.shuffle(&mut rng);

    let mut sequences = train;
    sequences.extend(a.valid().cloned());
    sequences.extend(b.valid().cloned());
    let out = a.with_sequences(sequences);
    out.validate()?;
    Ok(out)
}
