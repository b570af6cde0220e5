use std::path::Path;

use super::{CacheBuilder, LogitCache, FORMAT_VERSION};
use crate::corpus::Objective;
use crate::error::{KiError, Result};

const MAGIC: &[u8; 4] = b"KILC";
pub const HEADER_LEN: usize = 68;

pub fn cache_to_bytes(cache: &LogitCache) -> Vec<u8> {
    let mut out = Vec::with_capacity(cache.encoded_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(cache.objective.code());
    out.push(0);
    out.extend_from_slice(&cache.vocab_size.to_le_bytes());
    out.extend_from_slice(&cache.k.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&cache.tau.to_le_bytes());
    out.extend_from_slice(&cache.mask_seed.to_le_bytes());
    out.extend_from_slice(&cache.teacher_hash);
    out.extend_from_slice(&(cache.seqs.len() as u64).to_le_bytes());
    debug_assert_eq!(out.len(), HEADER_LEN);
    for s in &cache.seqs {
        out.extend_from_slice(&s.seq_id.to_le_bytes());
        out.extend_from_slice(&s.len.to_le_bytes());
        for p in &cache.positions[s.start as usize..(s.start + s.len) as usize] {
            out.extend_from_slice(&p.offset.to_le_bytes());
            out.extend_from_slice(&p.len.to_le_bytes());
            for &(id, prob) in &cache.entries[p.start as usize..p.start as usize + p.len as usize] {
                out.extend_from_slice(&id.to_le_bytes());
                out.extend_from_slice(&prob.to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&out[HEADER_LEN..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| KiError::CorruptCache(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn cache_from_bytes(bytes: &[u8]) -> Result<LogitCache> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(KiError::FormatError("not a KILC cache (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(KiError::FormatError(format!("unsupported cache version {version}")));
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(KiError::CorruptCache("file shorter than header".into()));
    }
    let mut r = Reader { buf: bytes, pos: 6 };
    let objective = Objective::from_code(r.take(1)?[0])
        .ok_or_else(|| KiError::FormatError("unknown objective code".into()))?;
    r.take(1)?;
    let vocab_size = r.u32()?;
    let k = r.u16()?;
    r.u16()?;
    let tau = r.f32()?;
    let mask_seed = r.u64()?;
    let teacher_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let num_seqs = r.u64()?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(KiError::FormatError(format!("cache header has invalid tau {tau}")));
    }
    if k == 0 {
        return Err(KiError::FormatError("cache header has K = 0".into()));
    }
    let body_end = bytes.len() - 4;
    let mut b = CacheBuilder::new(objective, vocab_size, k, tau, mask_seed, teacher_hash);
    let mut body = Reader {
        buf: &bytes[..body_end],
        pos: HEADER_LEN,
    };
    let mut scratch = Vec::with_capacity(k as usize);
    for _ in 0..num_seqs {
        let seq_id = body.u64()?;
        let n = body.u32()?;
        b.begin_sequence(seq_id)?;
        for _ in 0..n {
            let offset = body.u16()?;
            let kk = body.u16()?;
            scratch.clear();
            for _ in 0..kk {
                scratch.push((body.u32()?, body.f32()?));
            }
            b.push_position(offset, &scratch)?;
        }
    }
    if body.pos != body_end {
        return Err(KiError::CorruptCache(format!(
            "{} unexpected bytes after the last record",
            body_end - body.pos
        )));
    }
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if crc32fast::hash(&bytes[HEADER_LEN..body_end]) != stored {
        return Err(KiError::CorruptCache("checksum mismatch".into()));
    }
    Ok(b.finish())
}

pub fn write_cache(cache: &LogitCache, path: &Path) -> Result<()> {
    std::fs::write(path, cache_to_bytes(cache)).map_err(|e| KiError::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<LogitCache> {
    let bytes = std::fs::read(path).map_err(|e| KiError::io(path, e))?;
    cache_from_bytes(&bytes)
}
