use ki_core::corpus::{apply_masking, MaskedBatch, MaskingConfig, Objective, Sequence, Split};
use ki_core::error::KiError;
use ki_core::model::{forward_logits, init_params, self_loss, Mode, ModelConfig, Params};
use proptest::prelude::*;

fn batch(objective: Objective, b: usize, s: usize, v: u32) -> MaskedBatch {
    let seqs: Vec<Sequence> = (0..b as u64)
        .map(|i| Sequence {
            seq_id: i,
            split: Split::Train,
            domain: "d".into(),
            ids: (0..s as u32).map(|j| 5 + (j * 13 + i as u32 * 7) % (v - 5)).collect(),
        })
        .collect();
    let refs: Vec<&Sequence> = seqs.iter().collect();
    let cfg = MaskingConfig {
        objective,
        mask_rate: 0.3,
        seed: 1,
    };
    apply_masking(&refs, v as usize, &cfg).unwrap()
}

#[test]
fn logits_shape() {
    let cfg = ModelConfig::shape(Objective::Mlm, 2, 16, 2, 32, 100, 16);
    let p = init_params(&cfg, 1).unwrap();
    let l = forward_logits(&p, &batch(Objective::Mlm, 2, 16, 100), &cfg, Mode::Eval).unwrap();
    assert_eq!((l.batch, l.seq_len, l.vocab), (2, 16, 100));
    assert_eq!(l.values.len(), 2 * 16 * 100);
}

#[test]
fn eval_mode_is_deterministic_and_train_mode_is_seeded() {
    let mut cfg = ModelConfig::shape(Objective::Mlm, 2, 16, 2, 32, 100, 16);
    cfg.dropout = 0.1;
    let p = init_params(&cfg, 1).unwrap();
    let b = batch(Objective::Mlm, 2, 16, 100);
    let a = forward_logits(&p, &b, &cfg, Mode::Eval).unwrap();
    assert_eq!(a, forward_logits(&p, &b, &cfg, Mode::Eval).unwrap());
    let t1 = forward_logits(&p, &b, &cfg, Mode::Train { dropout_seed: 3 }).unwrap();
    let t2 = forward_logits(&p, &b, &cfg, Mode::Train { dropout_seed: 3 }).unwrap();
    let t3 = forward_logits(&p, &b, &cfg, Mode::Train { dropout_seed: 4 }).unwrap();
    assert_eq!(t1, t2);
    assert_ne!(t1, t3);
    assert_ne!(t1, a);
}

#[test]
fn out_of_range_id_is_vocab_mismatch() {
    let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, 50, 16);
    let p = init_params(&cfg, 1).unwrap();
    let mut b = batch(Objective::Mlm, 1, 16, 50);
    b.input_ids[3] = 50;
    assert!(matches!(
        forward_logits(&p, &b, &cfg, Mode::Eval),
        Err(KiError::VocabMismatch(_))
    ));
}

#[test]
fn different_seeds_differ() {
    let cfg = ModelConfig::shape(Objective::Mlm, 2, 64, 4, 256, 1000, 128);
    assert_ne!(init_params(&cfg, 1).unwrap(), init_params(&cfg, 2).unwrap());
    assert_eq!(init_params(&cfg, 1).unwrap(), init_params(&cfg, 1).unwrap());
}

#[test]
fn uniform_logits_give_ln_v() {
    let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, 100, 16);
    let mut p: Params<f32> = init_params(&cfg, 1).unwrap();
    for t in &mut p.tensors {
        t.data.iter_mut().for_each(|x| *x = 0.0);
    }
    let b = batch(Objective::Mlm, 2, 16, 100);
    let l = forward_logits(&p, &b, &cfg, Mode::Eval).unwrap();
    assert!((self_loss(&l, &b).unwrap() - 100f64.ln()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clm_is_causal(pos in 1usize..12, tok in 5u32..60, seed in 0u64..50) {
        let cfg = ModelConfig::shape(Objective::Clm, 2, 16, 4, 32, 60, 12);
        let p = init_params(&cfg, seed).unwrap();
        let b = batch(Objective::Clm, 2, 12, 60);
        let mut b2 = b.clone();
        b2.input_ids[pos] = tok;
        let l1 = forward_logits(&p, &b, &cfg, Mode::Eval).unwrap();
        let l2 = forward_logits(&p, &b2, &cfg, Mode::Eval).unwrap();
        for q in 0..pos {
            prop_assert_eq!(l1.row(0, q), l2.row(0, q));
        }
        // the other example is untouched entirely
        for q in 0..12 {
            prop_assert_eq!(l1.row(1, q), l2.row(1, q));
        }
    }

    #[test]
    fn self_loss_nonnegative(seed in 0u64..200) {
        let cfg = ModelConfig::shape(Objective::Mlm, 1, 8, 2, 16, 40, 16);
        let p = init_params(&cfg, seed).unwrap();
        let b = batch(Objective::Mlm, 2, 16, 40);
        let l = forward_logits(&p, &b, &cfg, Mode::Eval).unwrap();
        prop_assert!(self_loss(&l, &b).unwrap() >= 0.0);
    }
}
