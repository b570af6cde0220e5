//! Corpus ingestion: word-level vocabularies, packing into fixed-length
//! sequences, static MLM/CLM masking, domain mixing and proximity.

mod encode;
mod io;
mod masking;
mod proximity;
mod vocab;

pub use encode::{encode_corpus, mix_domains, Corpus, EncodeOptions, Sequence, Split, VALID_EVERY};
pub use io::{corpus_to_string, parse_corpus, read_corpus, write_corpus};
pub use masking::{apply_masking, MaskedBatch, MaskingConfig, Objective};
pub use proximity::domain_proximity;
pub use vocab::{
    build_vocab, Vocab, BOS, EOS, MASK, NUM_SPECIALS, PAD, SPECIAL_TOKENS, UNK,
};

pub(crate) use vocab::hex_digest;
