//! Offline teacher predictions: top-K distributions at every loss position
//! of a corpus, stored in the `.kilc` binary format.

mod format;
mod precompute;

use std::collections::HashMap;

pub use format::{cache_from_bytes, cache_to_bytes, read_cache, write_cache, HEADER_LEN};
pub use precompute::precompute_cache;

use crate::corpus::{hex_digest, Objective};
use crate::error::{KiError, Result};
use crate::kicore::SparseDistribution;

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PosRecord {
    pub offset: u16,
    pub start: u32,
    pub len: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SeqRecord {
    pub seq_id: u64,
    pub start: u32,
    pub len: u32,
}

/// Header fields plus the stored records. Probabilities are kept exactly as
/// stored on disk (f32); [`LogitCache::lookup`] widens and renormalises.
#[derive(Debug, Clone)]
pub struct LogitCache {
    pub objective: Objective,
    pub vocab_size: u32,
    pub k: u16,
    pub tau: f32,
    pub mask_seed: u64,
    pub teacher_hash: [u8; 32],
    pub(crate) seqs: Vec<SeqRecord>,
    pub(crate) positions: Vec<PosRecord>,
    pub(crate) entries: Vec<(u32, f32)>,
    index: HashMap<u64, usize>,
}

impl PartialEq for LogitCache {
    /// Bitwise equality of header and records.
    fn eq(&self, other: &Self) -> bool {
        self.objective == other.objective
            && self.vocab_size == other.vocab_size
            && self.k == other.k
            && self.tau.to_bits() == other.tau.to_bits()
            && self.mask_seed == other.mask_seed
            && self.teacher_hash == other.teacher_hash
            && self.seqs == other.seqs
            && self.positions == other.positions
            && self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits())
    }
}

/// Incremental construction in sequence order.
pub(crate) struct CacheBuilder {
    cache: LogitCache,
}

impl CacheBuilder {
    pub fn new(objective: Objective, vocab_size: u32, k: u16, tau: f32, mask_seed: u64, teacher_hash: [u8; 32]) -> Self {
        CacheBuilder {
            cache: LogitCache {
                objective,
                vocab_size,
                k,
                tau,
                mask_seed,
                teacher_hash,
                seqs: Vec::new(),
                positions: Vec::new(),
                entries: Vec::new(),
                index: HashMap::new(),
            },
        }
    }

    pub fn begin_sequence(&mut self, seq_id: u64) -> Result<()> {
        let c = &mut self.cache;
        if c.index.insert(seq_id, c.seqs.len()).is_some() {
            return Err(KiError::CorruptCache(format!("sequence {seq_id} stored twice")));
        }
        c.seqs.push(SeqRecord {
            seq_id,
            start: c.positions.len() as u32,
            len: 0,
        });
        Ok(())
    }

    pub fn push_position(&mut self, offset: u16, entries: &[(u32, f32)]) -> Result<()> {
        let c = &mut self.cache;
        let seq = c
            .seqs
            .last_mut()
            .ok_or_else(|| KiError::CorruptCache("position before any sequence".into()))?;
        if seq.len > 0 && c.positions[c.positions.len() - 1].offset >= offset {
            return Err(KiError::CorruptCache(format!(
                "positions of sequence {} not strictly increasing",
                seq.seq_id
            )));
        }
        if entries.is_empty() || entries.len() > c.k as usize {
            return Err(KiError::CorruptCache(format!(
                "record with {} entries (K = {})",
                entries.len(),
                c.k
            )));
        }
        for &(id, p) in entries {
            if id >= c.vocab_size || !(p > 0.0) || !p.is_finite() {
                return Err(KiError::CorruptCache(format!("invalid entry ({id}, {p})")));
            }
        }
        let sum: f64 = entries.iter().map(|e| e.1 as f64).sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(KiError::CorruptCache(format!("record sums to {sum}")));
        }
        seq.len += 1;
        c.positions.push(PosRecord {
            offset,
            start: c.entries.len() as u32,
            len: entries.len() as u16,
        });
        c.entries.extend_from_slice(entries);
        Ok(())
    }

    pub fn finish(self) -> LogitCache {
        self.cache
    }
}

impl LogitCache {
    pub fn teacher_hash_hex(&self) -> String {
        hex_digest(&self.teacher_hash)
    }

    pub fn num_sequences(&self) -> usize {
        self.seqs.len()
    }

    pub fn num_positions(&self) -> usize {
        self.positions.len()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn seq_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.seqs.iter().map(|s| s.seq_id)
    }

    /// Cached positions of one sequence, ascending.
    pub fn positions_of(&self, seq_id: u64) -> Option<Vec<usize>> {
        let s = self.seqs[*self.index.get(&seq_id)?];
        Some(
            self.positions[s.start as usize..(s.start + s.len) as usize]
                .iter()
                .map(|p| p.offset as usize)
                .collect(),
        )
    }

    /// Raw stored entries for `(seq_id, position)`.
    pub fn raw(&self, seq_id: u64, position: usize) -> Result<&[(u32, f32)]> {
        let missing = || KiError::MissingPosition { seq_id, position };
        let s = self.seqs[*self.index.get(&seq_id).ok_or_else(missing)?];
        let recs = &self.positions[s.start as usize..(s.start + s.len) as usize];
        let i = recs
            .binary_search_by_key(&position, |p| p.offset as usize)
            .map_err(|_| missing())?;
        let r = recs[i];
        Ok(&self.entries[r.start as usize..r.start as usize + r.len as usize])
    }

    /// Stored distribution at `(seq_id, position)`, renormalised in f64.
    pub fn lookup(&self, seq_id: u64, position: usize) -> Result<SparseDistribution> {
        let raw = self.raw(seq_id, position)?;
        SparseDistribution::normalized(raw.iter().map(|&(id, p)| (id, p as f64)).collect())
    }

    /// Size of the encoded file in bytes.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.seqs.len() * 12 + self.positions.len() * 4 + self.entries.len() * 8 + 4
    }

    /// Bytes a dense f32 distribution over the whole vocabulary would need
    /// for the same positions.
    pub fn dense_payload_len(&self) -> usize {
        self.positions.len() * self.vocab_size as usize * 4
    }
}

/// Free-function form of [`LogitCache::lookup`].
pub fn lookup(cache: &LogitCache, seq_id: u64, position: usize) -> Result<SparseDistribution> {
    cache.lookup(seq_id, position)
}
