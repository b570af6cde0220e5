use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::{lr_at, TrainConfig};
use super::metrics::{write_metrics, MetricsRow};
use super::optim::AdamW;
use crate::corpus::{apply_masking, Corpus, MaskedBatch, MaskingConfig, Sequence};
use crate::error::{KiError, Result};
use crate::kicore::{check_temperature, inheritance_rate, route_teacher, SparseDistribution, TeacherHandle, TeacherRegistry};
use crate::model::{
    checkpoint_hash, evaluate_loss, loss_gradients, write_checkpoint, LossSpec, Mode, ModelConfig, Params,
};
use crate::rng::{keyed2, splitmix64, stream};

const EVAL_BATCH: usize = 32;

/// exp of the mean NLL over every loss position of the valid split, eval mode.
pub fn evaluate_ppl(
    params: &Params<f32>,
    config: &ModelConfig,
    corpus: &Corpus,
    mask_seed: u64,
    mask_rate: f64,
) -> Result<f64> {
    let valid: Vec<&Sequence> = corpus.valid().collect();
    if valid.is_empty() {
        return Err(KiError::EmptyCorpus("validation split is empty".into()));
    }
    let masking = MaskingConfig {
        objective: config.objective,
        mask_rate,
        seed: mask_seed,
    };
    let mut nll = 0.0;
    let mut count = 0usize;
    for chunk in valid.chunks(EVAL_BATCH) {
        let batch = match apply_masking(chunk, config.vocab_size, &masking) {
            Ok(b) => b,
            Err(KiError::EmptyLossSupport) => continue,
            Err(e) => return Err(e),
        };
        let br = evaluate_loss(params, config, &batch, &LossSpec::self_only(), None, Mode::Eval)?;
        nll += br.loss_self * br.positions as f64;
        count += br.positions;
    }
    if count == 0 {
        return Err(KiError::EmptyLossSupport);
    }
    Ok((nll / count as f64).exp())
}

/// Sequential pass over per-epoch seeded permutations of the train split.
pub(crate) struct BatchStream<'a> {
    train: Vec<&'a Sequence>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    seed: u64,
}

impl<'a> BatchStream<'a> {
    pub fn new(corpus: &'a Corpus, seed: u64) -> Result<Self> {
        let train: Vec<&Sequence> = corpus.train().collect();
        if train.is_empty() {
            return Err(KiError::EmptyCorpus("train split is empty".into()));
        }
        let mut s = BatchStream {
            order: Vec::new(),
            train,
            cursor: 0,
            epoch: 0,
            seed,
        };
        s.shuffle();
        Ok(s)
    }

    fn shuffle(&mut self) {
        self.order = (0..self.train.len()).collect();
        self.order.shuffle(&mut keyed2(self.seed, stream::BATCH, self.epoch));
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<&'a Sequence> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.cursor = 0;
                self.shuffle();
            }
            out.push(self.train[self.order[self.cursor]]);
            self.cursor += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for `metrics.csv` and `ckpt_step<N>.kickpt`; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
    /// Start from these weights instead of a fresh initialisation.
    pub init: Option<Params<f32>>,
}

impl RunOptions {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: Some(dir.into()),
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub params: Params<f32>,
    /// Model config as trained (dropout taken from the train config).
    pub config: ModelConfig,
    pub metrics: Vec<MetricsRow>,
    /// `(step, path, hash)` of every checkpoint written.
    pub checkpoints: Vec<(u64, PathBuf, String)>,
    /// Hash of the final weights as a checkpoint.
    pub final_hash: String,
    /// Distinct teacher ids consulted, in first-use order.
    pub teacher_ids: Vec<String>,
}

impl RunOutput {
    pub fn final_ppl(&self) -> Option<f64> {
        self.metrics.iter().rev().find_map(|r| r.valid_ppl)
    }

    pub fn ppl_at(&self, step: u64) -> Option<f64> {
        self.metrics.iter().find(|r| r.step == step).and_then(|r| r.valid_ppl)
    }
}

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt_step{step}.kickpt")
}

fn check_teacher(h: &TeacherHandle, cfg: &TrainConfig, model: &ModelConfig) -> Result<()> {
    if h.vocab_size() != model.vocab_size {
        return Err(KiError::CacheMismatch(format!(
            "teacher vocabulary {} vs student vocabulary {}",
            h.vocab_size(),
            model.vocab_size
        )));
    }
    if h.objective() != model.objective {
        return Err(KiError::CacheMismatch(format!(
            "teacher objective {} vs student objective {}",
            h.objective(),
            model.objective
        )));
    }
    if let TeacherHandle::Cache(c) = h {
        if c.mask_seed != cfg.mask_seed {
            return Err(KiError::CacheMismatch(format!(
                "cache mask seed {} vs run mask seed {}",
                c.mask_seed, cfg.mask_seed
            )));
        }
    }
    check_temperature(cfg.tau, h.tau())
}

/// Teacher targets for every loss site of `batch`, each example routed by its
/// domain tag. Examples sharing a teacher are evaluated together.
fn batch_targets(batch: &MaskedBatch, reg: &TeacherRegistry, seen: &mut Vec<String>) -> Result<Vec<SparseDistribution>> {
    let mut groups: Vec<(&TeacherHandle, Vec<usize>)> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for b in 0..batch.batch_size {
        let h = route_teacher(&batch.domain_tags[b], reg)?;
        let id = h.id();
        let g = *slot.entry(id.clone()).or_insert_with(|| {
            groups.push((h, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(b);
        if !seen.contains(&id) {
            seen.push(id);
        }
    }
    let mut per_example: Vec<Vec<SparseDistribution>> = vec![Vec::new(); batch.batch_size];
    for (h, examples) in groups {
        let mut it = h.targets(batch, &examples)?.into_iter();
        for &b in &examples {
            per_example[b] = it.by_ref().take(batch.loss_positions[b].len()).collect();
        }
    }
    Ok(per_example.into_iter().flatten().collect())
}

fn save(dir: &Option<PathBuf>, step: u64, params: &Params<f32>, model: &ModelConfig, out: &mut Vec<(u64, PathBuf, String)>) -> Result<()> {
    if let Some(d) = dir {
        let path = d.join(checkpoint_name(step));
        let hash = write_checkpoint(&path, params, model)?;
        out.push((step, path, hash));
    }
    Ok(())
}

fn flush_metrics(dir: &Option<PathBuf>, rows: &[MetricsRow]) -> Result<()> {
    match dir {
        Some(d) => write_metrics(&d.join("metrics.csv"), rows),
        None => Ok(()),
    }
}

/// Trains `model_config` on the train split of `corpus`, consulting
/// `teachers` on steps where α_t > 0.
pub fn train_run(
    config: &TrainConfig,
    model_config: &ModelConfig,
    corpus: &Corpus,
    teachers: Option<&TeacherRegistry>,
    opts: &RunOptions,
) -> Result<RunOutput> {
    config.validate()?;
    let mut model = *model_config;
    model.dropout = config.dropout;
    model.validate()?;
    if corpus.vocab_size != model.vocab_size {
        return Err(KiError::VocabMismatch(format!(
            "corpus vocabulary {} vs model vocabulary {}",
            corpus.vocab_size, model.vocab_size
        )));
    }
    if corpus.seq_len > model.max_seq_len {
        return Err(KiError::Config(format!(
            "corpus sequence length {} exceeds max_seq_len {}",
            corpus.seq_len, model.max_seq_len
        )));
    }
    if config.schedule.uses_teacher() {
        let reg = teachers.filter(|r| !r.is_empty()).ok_or_else(|| {
            KiError::Config(format!("schedule {} needs at least one teacher", config.schedule.strategy))
        })?;
        for (_, h) in reg.entries() {
            check_teacher(h, config, &model)?;
        }
    }
    if let Some(d) = &opts.out_dir {
        std::fs::create_dir_all(d).map_err(|e| KiError::io(d, e))?;
    }

    let mut params = match &opts.init {
        Some(p) => {
            p.check_layout(&model)?;
            p.clone()
        }
        None => Params::init(&model, config.seed)?,
    };
    let mut opt = AdamW::new(&params, config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay);
    let masking = MaskingConfig {
        objective: model.objective,
        mask_rate: config.mask_rate,
        seed: config.mask_seed,
    };
    let mut batches = BatchStream::new(corpus, config.seed)?;
    let mut checkpoints = Vec::new();
    let mut rows: Vec<MetricsRow> = Vec::with_capacity(config.total_steps as usize);
    let mut teacher_ids = Vec::new();
    let tokens_per_step = (config.batch_size * corpus.seq_len) as u64;
    let dir = &opts.out_dir;
    save(dir, 0, &params, &model, &mut checkpoints)?;

    for t in 0..config.total_steps {
        let step = t + 1;
        let alpha = inheritance_rate(t, &config.schedule)?;
        let lr = lr_at(t, config);
        let seqs = batches.next_batch(config.batch_size);
        let batch = apply_masking(&seqs, model.vocab_size, &masking)?;
        let targets = if alpha > 0.0 {
            let reg = teachers.ok_or_else(|| KiError::Config("no teacher registry".into()))?;
            Some(batch_targets(&batch, reg, &mut teacher_ids)?)
        } else {
            None
        };
        let spec = LossSpec {
            alpha,
            tau: config.tau,
            label_smoothing: config.label_smoothing,
        };
        let mode = Mode::Train {
            dropout_seed: splitmix64(config.seed ^ splitmix64(step.wrapping_mul(0x9E37_79B9))),
        };
        let (br, grads) = match loss_gradients(&params, &model, &batch, &spec, targets.as_deref(), mode) {
            Ok(x) => x,
            Err(e) => {
                flush_metrics(dir, &rows)?;
                return Err(e);
            }
        };
        opt.step(&mut params, &grads, lr);
        if !params.all_finite() {
            flush_metrics(dir, &rows)?;
            return Err(KiError::NumericFailure(format!("non-finite weights after step {step}")));
        }
        let eval_now = step % config.eval_every == 0 || step == config.total_steps;
        let valid_ppl = if eval_now {
            let ppl = evaluate_ppl(&params, &model, corpus, config.mask_seed, config.mask_rate)?;
            if !ppl.is_finite() {
                flush_metrics(dir, &rows)?;
                return Err(KiError::NumericFailure(format!("validation PPL is {ppl} at step {step}")));
            }
            Some(ppl)
        } else {
            None
        };
        rows.push(MetricsRow {
            step,
            alpha_t: alpha,
            lr,
            loss_self: br.loss_self,
            loss_ki: br.loss_ki,
            loss_total: br.loss_total,
            valid_ppl,
            tokens_seen: step * tokens_per_step,
        });
        if eval_now {
            save(dir, step, &params, &model, &mut checkpoints)?;
            flush_metrics(dir, &rows)?;
        }
    }
    flush_metrics(dir, &rows)?;
    if let Some(d) = dir {
        write_manifest(d, config, &model, &teacher_ids)?;
    }
    let final_hash = checkpoint_hash(&params, &model);
    Ok(RunOutput {
        params,
        config: model,
        metrics: rows,
        checkpoints,
        final_hash,
        teacher_ids,
    })
}

fn write_manifest(dir: &Path, config: &TrainConfig, model: &ModelConfig, teachers: &[String]) -> Result<()> {
    let mut text = format!(
        "model {}\nschedule {} total_steps={} guided_steps={}\nseed {}\n",
        model.to_header(),
        config.schedule.strategy,
        config.schedule.total_steps,
        config.schedule.guided_steps,
        config.seed
    );
    for t in teachers {
        text.push_str(&format!("teacher {t}\n"));
    }
    let path = dir.join("run.txt");
    std::fs::write(&path, text).map_err(|e| KiError::io(&path, e))
}
