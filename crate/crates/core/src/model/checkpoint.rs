//! `KICKPT v1`: text header, tensor index, then a little-endian f32 blob.
//!
//! ```text
//! KICKPT v1
//! config objective=mlm n_layers=2 ...
//! tensors 34
//! tok_emb 0 1000x64
//! ...
//! end
//! <blob>
//! ```
//! Offsets are byte offsets into the blob.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::{layout, Params, Tensor};
use crate::corpus::hex_digest;
use crate::error::{KiError, Result};

const MAGIC: &str = "KICKPT v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Params<f32>,
    /// SHA-256 of the file bytes, hex.
    pub hash: String,
}

pub fn checkpoint_bytes(params: &Params<f32>, config: &ModelConfig) -> Vec<u8> {
    let mut head = format!("{MAGIC}\nconfig {}\ntensors {}\n", config.to_header(), params.tensors.len());
    let mut offset = 0usize;
    for t in &params.tensors {
        let shape: Vec<String> = t.shape.iter().map(usize::to_string).collect();
        head.push_str(&format!("{} {} {}\n", t.name, offset, shape.join("x")));
        offset += t.data.len() * 4;
    }
    head.push_str("end\n");
    let mut out = head.into_bytes();
    out.reserve(offset);
    for t in &params.tensors {
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Hash a checkpoint would have on disk, without writing it.
pub fn checkpoint_hash(params: &Params<f32>, config: &ModelConfig) -> String {
    hex_digest(&Sha256::digest(checkpoint_bytes(params, config)))
}

/// Writes the checkpoint and returns its hash.
pub fn write_checkpoint(path: &Path, params: &Params<f32>, config: &ModelConfig) -> Result<String> {
    params.check_layout(config)?;
    let bytes = checkpoint_bytes(params, config);
    std::fs::write(path, &bytes).map_err(|e| KiError::io(path, e))?;
    Ok(hex_digest(&Sha256::digest(&bytes)))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| KiError::io(path, e))?;
    parse_checkpoint(&bytes)
}

fn next_line<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*pos..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| KiError::FormatError("truncated checkpoint header".into()))?;
    *pos += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| KiError::FormatError("checkpoint header is not UTF-8".into()))
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0;
    if next_line(bytes, &mut pos)? != MAGIC {
        return Err(KiError::FormatError("not a KICKPT v1 checkpoint".into()));
    }
    let config = ModelConfig::from_header(
        next_line(bytes, &mut pos)?
            .strip_prefix("config ")
            .ok_or_else(|| KiError::FormatError("missing config line".into()))?,
    )?;
    let count: usize = next_line(bytes, &mut pos)?
        .strip_prefix("tensors ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| KiError::FormatError("missing tensor count".into()))?;
    let expected = layout(&config);
    if count != expected.len() {
        return Err(KiError::FormatError(format!(
            "config implies {} tensors, index lists {count}",
            expected.len()
        )));
    }
    let mut index = Vec::with_capacity(count);
    for (name, shape, kind) in expected {
        let line = next_line(bytes, &mut pos)?;
        let parts: Vec<&str> = line.split(' ').collect();
        let ok = parts.len() == 3 && parts[0] == name;
        let offset: Option<usize> = parts.get(1).and_then(|o| o.parse().ok());
        let got: Option<Vec<usize>> = parts
            .get(2)
            .and_then(|s| s.split('x').map(|d| d.parse().ok()).collect());
        match (ok, offset, got) {
            (true, Some(off), Some(g)) if g == shape => index.push((name, shape, kind, off)),
            _ => {
                return Err(KiError::FormatError(format!(
                    "tensor index line {line:?} does not match {name} {shape:?}"
                )))
            }
        }
    }
    if next_line(bytes, &mut pos)? != "end" {
        return Err(KiError::FormatError("missing end of tensor index".into()));
    }
    let blob = &bytes[pos..];
    let mut tensors = Vec::with_capacity(count);
    for (name, shape, kind, off) in index {
        let n: usize = shape.iter().product();
        let raw = blob
            .get(off..off + n * 4)
            .ok_or_else(|| KiError::FormatError(format!("tensor {name} extends past end of file")))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor { name, shape, kind, data });
    }
    let params = Params { tensors };
    if !params.all_finite() {
        return Err(KiError::NumericFailure("checkpoint contains non-finite weights".into()));
    }
    Ok(Checkpoint {
        config,
        params,
        hash: hex_digest(&Sha256::digest(bytes)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Objective;

    #[test]
    fn round_trip() {
        let cfg = ModelConfig::shape(Objective::Clm, 2, 16, 2, 32, 50, 12);
        let p = Params::<f32>::init(&cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.kickpt");
        let h = write_checkpoint(&path, &p, &cfg).unwrap();
        assert_eq!(h, checkpoint_hash(&p, &cfg));
        let c = read_checkpoint(&path).unwrap();
        assert_eq!(c.config, cfg);
        assert_eq!(c.params, p);
        assert_eq!(c.hash, h);
    }

    #[test]
    fn rejects_garbage_and_truncation() {
        assert!(matches!(parse_checkpoint(b"hello\n"), Err(KiError::FormatError(_))));
        let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, 20, 8);
        let p = Params::<f32>::init(&cfg, 1).unwrap();
        let bytes = checkpoint_bytes(&p, &cfg);
        assert!(matches!(
            parse_checkpoint(&bytes[..bytes.len() - 3]),
            Err(KiError::FormatError(_))
        ));
    }
}
