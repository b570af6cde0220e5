mod common;

use std::sync::{Arc, Mutex};

use ki_core::corpus::{
    apply_masking, build_vocab, encode_corpus, mix_domains, Corpus, EncodeOptions, MaskingConfig, Objective, Sequence,
    Vocab,
};
use ki_core::error::KiError;
use ki_core::kicore::{ScheduleSpec, Strategy, TeacherHandle, TeacherRegistry};
use ki_core::logitcache::precompute_cache;
use ki_core::model::{evaluate_loss, init_params, read_checkpoint, LossSpec, Mode, ModelConfig, Params};
use ki_core::trainer::{
    adapt_domain, chain_generations, evaluate_ppl, metrics_csv, train_run, Generation, RunOptions, TeacherChoice,
    TrainConfig,
};

fn vocab() -> Vocab {
    let mut docs = common::prose().documents(30_000, 1);
    docs.extend(common::technical().documents(30_000, 2));
    build_vocab(&docs, 400).unwrap()
}

fn corpus(v: &Vocab, domain: &str, tokens: usize, id_base: u64) -> Corpus {
    let lang = if domain == "prose" { common::prose() } else { common::technical() };
    let docs = lang.documents(tokens, id_base + 11);
    encode_corpus(&docs, v, &EncodeOptions::new(32, 5).domain(domain).id_base(id_base)).unwrap()
}

fn model(v: usize, objective: Objective) -> ModelConfig {
    ModelConfig::shape(objective, 1, 16, 2, 32, v, 32)
}

fn train(steps: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        peak_lr: 3e-3,
        eval_every: 4,
        ..TrainConfig::default()
    }
    .with_steps(steps)
}

fn cache_registry(teacher: &Params<f32>, cfg: &ModelConfig, c: &Corpus, t: &TrainConfig) -> TeacherRegistry {
    let m = MaskingConfig {
        objective: cfg.objective,
        mask_rate: t.mask_rate,
        seed: t.mask_seed,
    };
    let cache = precompute_cache(teacher, cfg, c, &m, t.tau, t.k).unwrap();
    TeacherRegistry::single(TeacherHandle::cache(cache))
}

#[test]
fn repeated_runs_write_identical_metrics() {
    let v = vocab();
    let c = corpus(&v, "prose", 40_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let t = train(10);
    let teacher = init_params(&cfg, 77).unwrap();
    let reg = cache_registry(&teacher, &cfg, &c, &t);
    let d = tempfile::tempdir().unwrap();
    let a = train_run(&t, &cfg, &c, Some(&reg), &RunOptions::in_dir(d.path().join("a"))).unwrap();
    let b = train_run(&t, &cfg, &c, Some(&reg), &RunOptions::in_dir(d.path().join("b"))).unwrap();
    let fa = std::fs::read(d.path().join("a/metrics.csv")).unwrap();
    let fb = std::fs::read(d.path().join("b/metrics.csv")).unwrap();
    assert_eq!(fa, fb);
    assert_eq!(a.params, b.params);
    assert_eq!(a.metrics.len(), 10);
    for (i, r) in a.metrics.iter().enumerate() {
        assert_eq!(r.step, i as u64 + 1);
        let recon = (1.0 - r.alpha_t) * r.loss_self + r.alpha_t * r.loss_ki;
        assert!((recon - r.loss_total).abs() < 1e-6);
        assert_eq!(r.valid_ppl.is_some(), r.step % 4 == 0 || r.step == 10);
    }
    assert!(a.metrics[0].alpha_t == 1.0 && a.metrics[0].loss_ki > 0.0);
    let names: Vec<String> = a.checkpoints.iter().map(|c| c.1.file_name().unwrap().to_string_lossy().into()).collect();
    assert_eq!(names, ["ckpt_step0.kickpt", "ckpt_step4.kickpt", "ckpt_step8.kickpt", "ckpt_step10.kickpt"]);
    let last = read_checkpoint(&a.checkpoints[3].1).unwrap();
    assert_eq!(last.hash, a.final_hash);
    assert_eq!(last.params, a.params);
    assert_eq!(a.teacher_ids, vec![reg.entries().next().unwrap().1.id()]);
}

#[test]
fn self_only_equals_linear_with_no_guided_steps() {
    let v = vocab();
    let c = corpus(&v, "prose", 20_000, 0);
    let cfg = model(v.len(), Objective::Clm);
    let so = train(6).with_schedule(Strategy::SelfOnly, 0);
    let lin = train(6).with_schedule(Strategy::Linear, 0);
    let a = train_run(&so, &cfg, &c, None, &RunOptions::default()).unwrap();
    let b = train_run(&lin, &cfg, &c, None, &RunOptions::default()).unwrap();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
    assert_eq!(a.params, b.params);
    // attaching a teacher changes nothing while α = 0
    let teacher = init_params(&cfg, 5).unwrap();
    let reg = cache_registry(&teacher, &cfg, &c, &so);
    let with = train_run(&so, &cfg, &c, Some(&reg), &RunOptions::default()).unwrap();
    assert_eq!(with.params, a.params);
    assert!(with.teacher_ids.is_empty());
}

#[test]
fn heviside_updates_after_switch_ignore_the_teacher() {
    let v = vocab();
    let c = corpus(&v, "prose", 20_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let t = train(6).with_schedule(Strategy::Heviside, 3);
    let ra = cache_registry(&init_params(&cfg, 5).unwrap(), &cfg, &c, &t);
    let a = train_run(&t, &cfg, &c, Some(&ra), &RunOptions::default()).unwrap();
    for r in &a.metrics[3..] {
        assert_eq!(r.alpha_t, 0.0);
        assert_eq!(r.loss_ki, 0.0);
        assert_eq!(r.loss_total, r.loss_self);
    }
}

#[test]
fn zero_steps_writes_initial_checkpoint_only() {
    let v = vocab();
    let c = corpus(&v, "prose", 10_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let d = tempfile::tempdir().unwrap();
    let t = train(0).with_schedule(Strategy::SelfOnly, 0);
    let out = train_run(&t, &cfg, &c, None, &RunOptions::in_dir(d.path())).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.checkpoints.len(), 1);
    assert!(d.path().join("ckpt_step0.kickpt").exists());
    assert_eq!(
        std::fs::read_to_string(d.path().join("metrics.csv")).unwrap(),
        "step,alpha,lr,loss_self,loss_ki,loss_total,valid_ppl,tokens_seen\n"
    );
    assert_eq!(out.params, init_params(&cfg, t.seed).unwrap());
}

#[test]
fn divergence_is_numeric_failure_and_keeps_checkpoint() {
    let v = vocab();
    let c = corpus(&v, "prose", 10_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let d = tempfile::tempdir().unwrap();
    let mut t = train(8).with_schedule(Strategy::SelfOnly, 0);
    t.peak_lr = 1e38;
    t.warmup_frac = 0.0;
    let e = train_run(&t, &cfg, &c, None, &RunOptions::in_dir(d.path())).unwrap_err();
    assert!(matches!(e, KiError::NumericFailure(_)), "{e}");
    assert_eq!(e.exit_code(), 3);
    assert!(read_checkpoint(&d.path().join("ckpt_step0.kickpt")).is_ok());
}

#[test]
fn mismatched_caches_are_rejected() {
    let v = vocab();
    let c = corpus(&v, "prose", 10_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let t = train(4);
    let teacher = init_params(&cfg, 5).unwrap();
    let reg = cache_registry(&teacher, &cfg, &c, &t);
    let mut other_seed = t.clone();
    other_seed.mask_seed += 1;
    assert!(matches!(
        train_run(&other_seed, &cfg, &c, Some(&reg), &RunOptions::default()),
        Err(KiError::CacheMismatch(_))
    ));
    let mut other_tau = t.clone();
    other_tau.tau = 1.0;
    assert!(matches!(
        train_run(&other_tau, &cfg, &c, Some(&reg), &RunOptions::default()),
        Err(KiError::TemperatureMismatch { .. })
    ));
    let clm = model(v.len(), Objective::Clm);
    assert!(matches!(
        train_run(&t, &clm, &c, Some(&reg), &RunOptions::default()),
        Err(KiError::CacheMismatch(_))
    ));
    assert!(matches!(
        train_run(&t, &cfg, &c, None, &RunOptions::default()),
        Err(KiError::Config(_))
    ));
}

#[test]
fn ppl_of_uniform_and_fresh_models() {
    let v = vocab();
    let c = corpus(&v, "prose", 40_000, 0);
    let cfg = model(v.len(), Objective::Mlm);
    let mut zero = init_params(&cfg, 1).unwrap();
    for t in &mut zero.tensors {
        t.data.iter_mut().for_each(|x| *x = 0.0);
    }
    let ppl = evaluate_ppl(&zero, &cfg, &c, 3, 0.15).unwrap();
    assert!((ppl - v.len() as f64).abs() < 0.01, "{ppl}");
    let fresh = init_params(&cfg, 2).unwrap();
    let a = evaluate_ppl(&fresh, &cfg, &c, 3, 0.15).unwrap();
    assert_eq!(a, evaluate_ppl(&fresh, &cfg, &c, 3, 0.15).unwrap());
    let vf = v.len() as f64;
    assert!(a >= 0.5 * vf && a <= 2.0 * vf, "{a}");
    let no_valid = Corpus {
        sequences: c.train().cloned().collect(),
        ..c.clone()
    };
    assert!(matches!(evaluate_ppl(&fresh, &cfg, &no_valid, 3, 0.15), Err(KiError::EmptyCorpus(_))));
}

#[test]
fn ppl_is_exp_of_self_loss_on_one_batch() {
    let v = vocab();
    let c = corpus(&v, "prose", 40_000, 0);
    assert!(c.num_valid() > 0 && c.num_valid() <= 32);
    let cfg = model(v.len(), Objective::Mlm);
    let p = init_params(&cfg, 2).unwrap();
    let valid: Vec<&Sequence> = c.valid().collect();
    let m = MaskingConfig {
        objective: Objective::Mlm,
        mask_rate: 0.15,
        seed: 3,
    };
    let b = apply_masking(&valid, v.len(), &m).unwrap();
    let l = evaluate_loss(&p, &cfg, &b, &LossSpec::self_only(), None, Mode::Eval).unwrap();
    let ppl = evaluate_ppl(&p, &cfg, &c, 3, 0.15).unwrap();
    assert!((ppl - l.loss_self.exp()).abs() < 1e-9 * ppl);
}

#[test]
fn chains() {
    let v = vocab();
    let c = corpus(&v, "prose", 20_000, 0);
    let g = |d: usize, h: usize| Generation {
        model: ModelConfig::shape(Objective::Mlm, 1, d, h, 2 * d, v.len(), 32),
        train: train(4),
        teacher: TeacherChoice::Previous,
    };
    let (lin, outs) = chain_generations(&[g(8, 2)], &c, None).unwrap();
    assert_eq!(lin.len(), 1);
    assert!(lin.entries[0].teacher_id.is_none());
    let so = train(4).with_schedule(Strategy::SelfOnly, 0);
    let direct = train_run(&so, &g(8, 2).model, &c, None, &RunOptions::default()).unwrap();
    assert_eq!(metrics_csv(&outs[0].metrics), metrics_csv(&direct.metrics));

    let d = tempfile::tempdir().unwrap();
    let (lin3, outs3) = chain_generations(&[g(8, 2), g(12, 2), g(16, 2)], &c, Some(d.path())).unwrap();
    assert_eq!(lin3.len(), 3);
    assert_eq!(lin3.entries[1].teacher_id.as_deref(), Some(outs3[0].final_hash.as_str()));
    assert_eq!(outs3[1].teacher_ids, vec![outs3[0].final_hash.clone()]);
    assert_eq!(lin3.entries[2].teacher_id.as_deref(), Some(outs3[1].final_hash.as_str()));
    assert!(d.path().join("lineage.txt").exists());

    let mut skip = g(16, 2);
    skip.teacher = TeacherChoice::Generation(0);
    let (lin2, outs2) = chain_generations(&[g(8, 2), skip], &c, None).unwrap();
    assert_eq!(lin2.len(), 2);
    assert_eq!(lin2.entries[1].teacher_id.as_deref(), Some(outs2[0].final_hash.as_str()));
    assert_eq!(lin2.entries[0].corpus_id, c.content_hash());
}

#[test]
fn adaptation_routes_by_domain_and_reports_four_ppls() {
    let v = vocab();
    let src = corpus(&v, "prose", 30_000, 0);
    let a = corpus(&v, "prose", 30_000, 1_000_000);
    let b = corpus(&v, "tech", 30_000, 2_000_000);
    let mixed = mix_domains(&a, &b, 1, 1, 9).unwrap();
    let cfg = model(v.len(), Objective::Mlm);
    let t = train(6);
    let student = init_params(&cfg, 1).unwrap();

    let none = adapt_domain(&student, &cfg, &b, None, 0, ScheduleSpec::self_only(0), &src, &t, &RunOptions::default())
        .unwrap();
    assert_eq!(none.ppl.target_before, none.ppl.target_after);
    assert_eq!(none.ppl.source_before, none.ppl.source_after);

    let ta = init_params(&cfg, 31).unwrap();
    let tb = init_params(&cfg, 32).unwrap();
    let ca = cache_registry(&ta, &cfg, &mixed.filter_domain("prose"), &t);
    let cb = cache_registry(&tb, &cfg, &mixed.filter_domain("tech"), &t);
    let ha = ca.entries().next().unwrap().1.clone();
    let hb = cb.entries().next().unwrap().1.clone();
    let (ida, idb) = (ha.id(), hb.id());
    let mut reg = TeacherRegistry::new().with("prose", ha).unwrap().with("tech", hb).unwrap();
    let seen = Arc::new(Mutex::new(Vec::<(String, String)>::new()));
    let s2 = seen.clone();
    reg.set_observer(Arc::new(move |tag, h| s2.lock().unwrap().push((tag.into(), h.id()))));
    let out = adapt_domain(
        &student,
        &cfg,
        &mixed,
        Some(&reg),
        6,
        ScheduleSpec::new(Strategy::Linear, 6, 6),
        &src,
        &t,
        &RunOptions::default(),
    )
    .unwrap();
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 6 * 8);
    assert!(seen.iter().any(|(tag, _)| tag == "prose") && seen.iter().any(|(tag, _)| tag == "tech"));
    for (tag, id) in seen.iter() {
        assert_eq!(id, if tag == "prose" { &ida } else { &idb });
    }
    let p = out.ppl;
    for x in [p.target_before, p.target_after, p.source_before, p.source_after] {
        assert!(x.is_finite() && x > 1.0);
    }
    assert!(p.target_after < p.target_before);
}
