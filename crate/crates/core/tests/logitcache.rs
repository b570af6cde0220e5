mod common;

use ki_core::corpus::{apply_masking, build_vocab, encode_corpus, Corpus, EncodeOptions, MaskingConfig, Objective};
use ki_core::error::KiError;
use ki_core::logitcache::{cache_to_bytes, lookup, precompute_cache, read_cache, write_cache};
use ki_core::model::{init_params, site_logits, temperature_softmax, Mode, ModelConfig};

fn corpus(tokens: usize, seq_len: usize, vocab: usize) -> Corpus {
    let docs = common::prose().documents(tokens, 1);
    let v = build_vocab(&docs, vocab).unwrap();
    encode_corpus(&docs, &v, &EncodeOptions::new(seq_len, 2)).unwrap()
}

fn masking(objective: Objective) -> MaskingConfig {
    MaskingConfig {
        objective,
        mask_rate: 0.15,
        seed: 21,
    }
}

#[test]
fn every_record_sums_to_one_and_file_is_reproducible() {
    let c = corpus(20_000, 32, 300);
    let cfg = ModelConfig::shape(Objective::Mlm, 1, 16, 2, 32, c.vocab_size, 32);
    let p = init_params(&cfg, 3).unwrap();
    let a = precompute_cache(&p, &cfg, &c, &masking(Objective::Mlm), 2.0, 10).unwrap();
    for id in a.seq_ids().collect::<Vec<_>>() {
        for pos in a.positions_of(id).unwrap() {
            let raw = a.raw(id, pos).unwrap();
            let s: f64 = raw.iter().map(|e| e.1 as f64).sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(raw.len() <= 10);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let (f1, f2) = (dir.path().join("a.kilc"), dir.path().join("b.kilc"));
    write_cache(&a, &f1).unwrap();
    let b = precompute_cache(&p, &cfg, &c, &masking(Objective::Mlm), 2.0, 10).unwrap();
    write_cache(&b, &f2).unwrap();
    assert_eq!(std::fs::read(&f1).unwrap(), std::fs::read(&f2).unwrap());
    let back = read_cache(&f1).unwrap();
    assert_eq!(back, a);
    assert_eq!(std::fs::metadata(&f1).unwrap().len() as usize, a.encoded_len());
}

#[test]
fn full_k_matches_direct_forward() {
    let full = corpus(3_000, 32, 120);
    let one = Corpus {
        sequences: full.train().take(1).cloned().collect(),
        ..full.clone()
    };
    for objective in [Objective::Mlm, Objective::Clm] {
        let cfg = ModelConfig::shape(objective, 2, 16, 2, 32, one.vocab_size, 32);
        let p = init_params(&cfg, 4).unwrap();
        let m = masking(objective);
        let cache = precompute_cache(&p, &cfg, &one, &m, 1.5, cfg.vocab_size).unwrap();
        let seq = &one.sequences[0];
        let batch = apply_masking(&[seq], cfg.vocab_size, &m).unwrap();
        let z = site_logits(&p, &cfg, &batch, Mode::Eval).unwrap();
        for (row, &pos) in z.chunks(cfg.vocab_size).zip(&batch.loss_positions[0]) {
            let dense = temperature_softmax(row, 1.5).unwrap();
            let d = lookup(&cache, seq.seq_id, pos).unwrap();
            assert_eq!(d.len(), cfg.vocab_size);
            for (k, &pk) in dense.iter().enumerate() {
                assert!((d.prob(k as u32) - pk).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn lookup_errors_and_coverage() {
    let c = corpus(10_000, 32, 200);
    let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, c.vocab_size, 32);
    let p = init_params(&cfg, 1).unwrap();
    let m = masking(Objective::Mlm);
    let cache = precompute_cache(&p, &cfg, &c, &m, 2.0, 5).unwrap();
    assert!(matches!(lookup(&cache, u64::MAX, 0), Err(KiError::MissingPosition { .. })));
    for s in c.valid() {
        assert!(cache.positions_of(s.seq_id).is_none());
    }
    for s in c.train() {
        let b = apply_masking(&[s], c.vocab_size, &m).ok();
        let want = b.map(|b| b.loss_positions[0].clone()).unwrap_or_default();
        for pos in 0..c.seq_len {
            assert_eq!(lookup(&cache, s.seq_id, pos).is_ok(), want.contains(&pos));
        }
    }
}

#[test]
fn storage_ratio_for_large_vocab() {
    let docs: Vec<String> = common::prose().documents(30_000, 5);
    let mut docs2 = common::technical().documents(30_000, 6);
    docs2.extend(docs);
    let words: std::collections::BTreeSet<&str> = docs2.iter().flat_map(|d| d.split_whitespace()).collect();
    // pad the vocabulary with unseen words up to 4096 regular entries
    let mut tokens: Vec<String> = words.iter().map(|s| s.to_string()).collect();
    let mut i = 0;
    while tokens.len() < 4096 {
        tokens.push(format!("unused{i}"));
        i += 1;
    }
    let v = ki_core::corpus::Vocab::from_tokens(tokens.iter()).unwrap();
    let c = encode_corpus(&docs2, &v, &EncodeOptions::new(32, 3)).unwrap();
    let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, v.len(), 32);
    let p = init_params(&cfg, 1).unwrap();
    let cache = precompute_cache(&p, &cfg, &c, &masking(Objective::Mlm), 2.0, 10).unwrap();
    let bytes = cache_to_bytes(&cache).len();
    let ratio = cache.dense_payload_len() as f64 / bytes as f64;
    assert!(v.len() >= 4000);
    assert!(ratio >= 50.0, "ratio {ratio}");
}
