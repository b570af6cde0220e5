use std::path::PathBuf;

use super::config::TrainConfig;
use super::run::{train_run, RunOptions, RunOutput};
use crate::corpus::{Corpus, MaskingConfig};
use crate::error::{KiError, Result};
use crate::kicore::{ScheduleSpec, TeacherHandle, TeacherRegistry};
use crate::logitcache::precompute_cache;
use crate::model::ModelConfig;

/// Which earlier generation teaches this one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TeacherChoice {
    /// The generation immediately before (none for the first).
    #[default]
    Previous,
    /// An explicit earlier generation, by index; allows skip chains.
    Generation(usize),
    None,
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub teacher: TeacherChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineageEntry {
    pub model_id: String,
    pub teacher_id: Option<String>,
    pub guided_steps: u64,
    pub corpus_id: String,
}

/// Generations in training order; each teacher precedes its student.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lineage {
    pub entries: Vec<LineageEntry>,
}

impl Lineage {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "G{} model={} teacher={} guided_steps={} corpus={}\n",
                i + 1,
                e.model_id,
                e.teacher_id.as_deref().unwrap_or("-"),
                e.guided_steps,
                e.corpus_id
            ));
        }
        out
    }
}

/// Trains the generations in order. A generation without a teacher is trained
/// with a self-only schedule; one with a teacher inherits from a cache
/// precomputed from that teacher's final weights.
pub fn chain_generations(
    generations: &[Generation],
    corpus: &Corpus,
    out_dir: Option<&std::path::Path>,
) -> Result<(Lineage, Vec<RunOutput>)> {
    let corpus_id = corpus.content_hash();
    let mut lineage = Lineage::default();
    let mut outputs: Vec<RunOutput> = Vec::with_capacity(generations.len());
    for (i, g) in generations.iter().enumerate() {
        let teacher = match g.teacher {
            TeacherChoice::Previous if i > 0 => Some(i - 1),
            TeacherChoice::Previous | TeacherChoice::None => None,
            TeacherChoice::Generation(j) if j < i => Some(j),
            TeacherChoice::Generation(j) => {
                return Err(KiError::Config(format!(
                    "generation {} cannot inherit from generation {} (not trained yet)",
                    i + 1,
                    j + 1
                )))
            }
        };
        let dir: Option<PathBuf> = out_dir.map(|d| d.join(format!("g{}", i + 1)));
        let opts = RunOptions { out_dir: dir, init: None };
        let (out, teacher_id, guided) = match teacher {
            None => {
                let mut tc = g.train.clone();
                tc.schedule = ScheduleSpec::self_only(tc.total_steps);
                (train_run(&tc, &g.model, corpus, None, &opts)?, None, 0)
            }
            Some(j) => {
                let tmodel = outputs[j].config;
                let masking = MaskingConfig {
                    objective: g.model.objective,
                    mask_rate: g.train.mask_rate,
                    seed: g.train.mask_seed,
                };
                let cache = precompute_cache(&outputs[j].params, &tmodel, corpus, &masking, g.train.tau, g.train.k)?;
                let reg = TeacherRegistry::single(TeacherHandle::cache(cache));
                let out = train_run(&g.train, &g.model, corpus, Some(&reg), &opts)?;
                (out, Some(outputs[j].final_hash.clone()), g.train.schedule.guided_steps)
            }
        };
        lineage.entries.push(LineageEntry {
            model_id: out.final_hash.clone(),
            teacher_id,
            guided_steps: guided,
            corpus_id: corpus_id.clone(),
        });
        outputs.push(out);
    }
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).map_err(|e| KiError::io(d, e))?;
        let p = d.join("lineage.txt");
        std::fs::write(&p, lineage.to_text()).map_err(|e| KiError::io(&p, e))?;
    }
    Ok((lineage, outputs))
}
