//! Text corpus files: a `KICORPUS v1 vocab_hash=<hex> seq_len=<n>` header
//! line, then `seq_id<TAB>split<TAB>domain<TAB>ids` per sequence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::encode::{Corpus, Sequence, Split};
use super::vocab::Vocab;
use crate::error::{KiError, Result};

const MAGIC: &str = "KICORPUS v1";

pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = format!(
        "{MAGIC} vocab_hash={} seq_len={}\n",
        corpus.vocab_hash, corpus.seq_len
    );
    for s in &corpus.sequences {
        let _ = write!(out, "{}\t{}\t{}\t", s.seq_id, s.split.as_str(), s.domain);
        for (i, id) in s.ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{id}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_corpus(text: &str, vocab: &Vocab) -> Result<Corpus> {
    let mut lines = text.split('\n');
    let header = lines
        .next()
        .filter(|h| h.starts_with(MAGIC))
        .ok_or_else(|| KiError::FormatError("missing KICORPUS v1 header".into()))?;
    let mut vocab_hash = None;
    let mut seq_len = None;
    for field in header[MAGIC.len()..].split_whitespace() {
        match field.split_once('=') {
            Some(("vocab_hash", v)) => vocab_hash = Some(v.to_string()),
            Some(("seq_len", v)) => {
                seq_len = Some(v.parse::<usize>().map_err(|_| {
                    KiError::FormatError(format!("bad seq_len {v:?}"))
                })?)
            }
            _ => return Err(KiError::FormatError(format!("bad header field {field:?}"))),
        }
    }
    let vocab_hash =
        vocab_hash.ok_or_else(|| KiError::FormatError("header lacks vocab_hash".into()))?;
    let seq_len = seq_len.ok_or_else(|| KiError::FormatError("header lacks seq_len".into()))?;
    if vocab_hash != vocab.hash_hex() {
        return Err(KiError::VocabMismatch(
            "corpus was encoded with a different vocabulary".into(),
        ));
    }
    let mut sequences = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| KiError::FormatError(format!("record {}: {what}", lineno + 1));
        let mut cols = line.split('\t');
        let (Some(id), Some(split), Some(domain), Some(ids), None) =
            (cols.next(), cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad("expected 4 tab-separated fields"));
        };
        let ids = ids
            .split(' ')
            .map(|t| t.parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad token id"))?;
        sequences.push(Sequence {
            seq_id: id.parse().map_err(|_| bad("bad seq_id"))?,
            split: Split::parse(split).ok_or_else(|| bad("bad split"))?,
            domain: domain.to_string(),
            ids,
        });
    }
    let corpus = Corpus {
        vocab_hash,
        vocab_size: vocab.len(),
        seq_len,
        sequences,
        warnings: Vec::new(),
    };
    corpus.validate()?;
    Ok(corpus)
}

pub fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    fs::write(path, corpus_to_string(corpus)).map_err(|e| KiError::io(path, e))
}

pub fn read_corpus(path: &Path, vocab: &Vocab) -> Result<Corpus> {
    let text = fs::read_to_string(path).map_err(|e| KiError::io(path, e))?;
    parse_corpus(&text, vocab)
}
