use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ki_core::corpus::{build_vocab, domain_proximity, encode_corpus, read_corpus, write_corpus, Corpus, EncodeOptions, MaskingConfig, Vocab};
use ki_core::kicore::{ScheduleSpec, TeacherHandle, TeacherRegistry, WILDCARD};
use ki_core::logitcache::{precompute_cache, read_cache, write_cache};
use ki_core::model::{read_checkpoint, ModelConfig};
use ki_core::runconfig::parse_config;
use ki_core::trainer::{
    adapt_domain, chain_generations, evaluate_ppl, train_run, Generation, RunOptions, TeacherChoice, TrainConfig,
};
use ki_core::KiError;

use crate::{AdaptArgs, BuildCorpusArgs, ChainArgs, CorpusArg, EvalArgs, KiTrainArgs, PrecomputeArgs, ProximityArgs, TrainArgs};

fn io_err(path: &Path, source: std::io::Error) -> KiError {
    KiError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

fn sibling_vocab(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join("vocab.txt")
}

fn load_corpus(path: &Path, vocab: Option<&Path>) -> Result<(Corpus, Vocab)> {
    let vpath = vocab.map_or_else(|| sibling_vocab(path), Path::to_path_buf);
    let vocab = Vocab::read(&vpath).with_context(|| format!("reading vocabulary {}", vpath.display()))?;
    let corpus = read_corpus(path, &vocab).with_context(|| format!("reading corpus {}", path.display()))?;
    Ok((corpus, vocab))
}

impl CorpusArg {
    fn load(&self) -> Result<(Corpus, Vocab)> {
        load_corpus(&self.corpus, self.vocab.as_deref())
    }
}

/// A parsed run config. The model's vocabulary size and maximum sequence
/// length follow the corpus unless the file sets them.
struct RunConfig {
    model: ModelConfig,
    train: TrainConfig,
    explicit_vocab: bool,
    explicit_seq_len: bool,
}

impl RunConfig {
    fn read(path: &Path) -> Result<Self> {
        let (model, train) = parse_config(path)?;
        let text = read_text(path)?;
        let explicit = |key: &str| {
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .any(|l| l.split_once('=').is_some_and(|(k, _)| k.trim() == key))
        };
        Ok(RunConfig {
            model,
            train,
            explicit_vocab: explicit("model.vocab_size"),
            explicit_seq_len: explicit("model.max_seq_len"),
        })
    }

    fn for_corpus(self, corpus: &Corpus) -> Result<(ModelConfig, TrainConfig)> {
        let mut model = self.model;
        if !self.explicit_vocab {
            model.vocab_size = corpus.vocab_size;
        }
        if !self.explicit_seq_len {
            model.max_seq_len = corpus.seq_len;
        }
        model.validate()?;
        Ok((model, self.train))
    }
}

fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                docs.push(std::mem::take(&mut cur));
            }
        } else {
            if !cur.is_empty() {
                cur.push(' ');
            }
            cur.push_str(line.trim());
        }
    }
    if !cur.is_empty() {
        docs.push(cur);
    }
    docs
}

pub fn build_corpus(a: BuildCorpusArgs) -> Result<()> {
    let mut docs = Vec::new();
    for p in &a.inputs {
        docs.extend(split_documents(&read_text(p)?));
    }
    let vocab = match &a.vocab {
        Some(p) => Vocab::read(p)?,
        None => {
            let v = build_vocab(&docs, a.vocab_size)?;
            let out = a.vocab_out.clone().unwrap_or_else(|| sibling_vocab(&a.out));
            v.write(&out)?;
            v
        }
    };
    let opts = EncodeOptions::new(a.seq_len, a.seed).domain(a.domain).id_base(a.id_base);
    let corpus = encode_corpus(&docs, &vocab, &opts)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    write_corpus(&corpus, &a.out)?;
    println!(
        "sequences={} train={} valid={} vocab={}",
        corpus.len(),
        corpus.num_train(),
        corpus.num_valid(),
        vocab.len()
    );
    Ok(())
}

fn init_from(path: Option<&Path>, model: &ModelConfig) -> Result<Option<ki_core::model::Params<f32>>> {
    let Some(p) = path else { return Ok(None) };
    let ck = read_checkpoint(p)?;
    ck.params
        .check_layout(model)
        .with_context(|| format!("{} does not match the configured model", p.display()))?;
    Ok(Some(ck.params))
}

fn report_run(out: &ki_core::trainer::RunOutput) {
    match out.final_ppl() {
        Some(p) => println!("final_valid_ppl={p} model={}", out.final_hash),
        None => println!("model={}", out.final_hash),
    }
}

pub fn pretrain(a: TrainArgs) -> Result<()> {
    let cfg = RunConfig::read(&a.config)?;
    let (corpus, _) = a.corpus.load()?;
    let (model, mut train) = cfg.for_corpus(&corpus)?;
    train.schedule = ScheduleSpec::self_only(train.total_steps);
    let opts = RunOptions {
        out_dir: Some(a.out.clone()),
        init: init_from(a.init.as_deref(), &model)?,
    };
    report_run(&train_run(&train, &model, &corpus, None, &opts)?);
    Ok(())
}

fn teacher_registry(specs: &[String]) -> Result<TeacherRegistry> {
    let mut reg = TeacherRegistry::new();
    for s in specs {
        let (tag, path) = match s.split_once('=') {
            Some((d, p)) if !d.contains('/') && !d.is_empty() => (d.to_string(), p),
            _ => (WILDCARD.to_string(), s.as_str()),
        };
        let cache = read_cache(Path::new(path)).with_context(|| format!("reading cache {path}"))?;
        reg.insert(tag, TeacherHandle::cache(cache))?;
    }
    Ok(reg)
}

pub fn precompute(a: PrecomputeArgs) -> Result<()> {
    let (corpus, _) = a.corpus.load()?;
    let ck = read_checkpoint(&a.model)?;
    let base = match &a.config {
        Some(p) => parse_config(p)?.1,
        None => TrainConfig::default(),
    };
    let masking = MaskingConfig {
        objective: ck.config.objective,
        mask_rate: a.mask_rate.unwrap_or(base.mask_rate),
        seed: a.mask_seed.unwrap_or(base.mask_seed),
    };
    let corpus = match &a.domain {
        Some(d) => corpus.filter_domain(d),
        None => corpus,
    };
    if corpus.num_train() == 0 {
        return Err(KiError::EmptyCorpus("no train sequences to cover".into()).into());
    }
    let tau = a.tau.unwrap_or(base.tau);
    let k = a.k.unwrap_or(base.k);
    let cache = precompute_cache(&ck.params, &ck.config, &corpus, &masking, tau, k)?;
    write_cache(&cache, &a.out)?;
    println!(
        "positions={} entries={} bytes={} dense_bytes={}",
        cache.num_positions(),
        cache.num_entries(),
        cache.encoded_len(),
        cache.dense_payload_len()
    );
    Ok(())
}

pub fn ki_train(a: KiTrainArgs) -> Result<()> {
    let t = a.train;
    let cfg = RunConfig::read(&t.config)?;
    let (corpus, _) = t.corpus.load()?;
    let (model, train) = cfg.for_corpus(&corpus)?;
    let reg = teacher_registry(&a.teacher_caches)?;
    let opts = RunOptions {
        out_dir: Some(t.out.clone()),
        init: init_from(t.init.as_deref(), &model)?,
    };
    report_run(&train_run(&train, &model, &corpus, Some(&reg), &opts)?);
    Ok(())
}

fn parse_teacher_override(s: &str, n: usize) -> Result<(usize, TeacherChoice)> {
    let bad = || KiError::Config(format!("--teacher {s:?}: expected student=teacher generation numbers"));
    let (st, te) = s.split_once('=').ok_or_else(bad)?;
    let st: usize = st.trim().parse().map_err(|_| bad())?;
    let te: usize = te.trim().parse().map_err(|_| bad())?;
    if st == 0 || st > n {
        return Err(bad().into());
    }
    let choice = if te == 0 { TeacherChoice::None } else { TeacherChoice::Generation(te - 1) };
    Ok((st - 1, choice))
}

pub fn chain(a: ChainArgs) -> Result<()> {
    let cfgs = a.generations.iter().map(|p| RunConfig::read(p)).collect::<Result<Vec<_>>>()?;
    let (corpus, _) = a.corpus.load()?;
    let mut gens = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        let (model, train) = cfg.for_corpus(&corpus)?;
        gens.push(Generation {
            model,
            train,
            teacher: TeacherChoice::Previous,
        });
    }
    for s in &a.teachers {
        let (i, choice) = parse_teacher_override(s, gens.len())?;
        gens[i].teacher = choice;
    }
    let (lineage, outs) = chain_generations(&gens, &corpus, Some(&a.out))?;
    print!("{}", lineage.to_text());
    if let Some(p) = outs.last().and_then(|o| o.final_ppl()) {
        println!("final_valid_ppl={p}");
    }
    Ok(())
}

pub fn adapt(a: AdaptArgs) -> Result<()> {
    let cfg = RunConfig::read(&a.config)?;
    let (corpus, _) = a.corpus.load()?;
    let (source, _) = load_corpus(&a.source_corpus, a.source_vocab.as_deref())?;
    let train = cfg.train;
    let ck = read_checkpoint(&a.model)?;
    let model = ModelConfig {
        dropout: train.dropout,
        ..ck.config
    };
    let (reg, schedule) = if a.teacher_caches.is_empty() {
        (None, ScheduleSpec::self_only(a.steps))
    } else {
        (Some(teacher_registry(&a.teacher_caches)?), train.schedule)
    };
    let opts = RunOptions {
        out_dir: a.out.clone(),
        init: None,
    };
    let out = adapt_domain(&ck.params, &model, &corpus, reg.as_ref(), a.steps, schedule, &source.valid_only(), &train, &opts)?;
    let p = out.ppl;
    println!("target_before={}", p.target_before);
    println!("target_after={}", p.target_after);
    println!("source_before={}", p.source_before);
    println!("source_after={}", p.source_after);
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (corpus, _) = a.corpus.load()?;
    let ck = read_checkpoint(&a.model)?;
    let ppl = evaluate_ppl(&ck.params, &ck.config, &corpus, a.mask_seed, a.mask_rate)?;
    println!("valid_ppl={ppl}");
    Ok(())
}

pub fn proximity(a: ProximityArgs) -> Result<()> {
    let (ca, va) = load_corpus(&a.a, a.vocab_a.as_deref())?;
    let (cb, vb) = load_corpus(&a.b, a.vocab_b.as_deref())?;
    let stop: HashSet<String> = match &a.stopwords {
        Some(p) => read_text(p)?.split_whitespace().map(str::to_string).collect(),
        None => HashSet::new(),
    };
    if a.top_n == 0 {
        bail!(KiError::Config("--top-n must be positive".into()));
    }
    println!("proximity={}", domain_proximity(&ca, &va, &cb, &vb, a.top_n, &stop)?);
    Ok(())
}
