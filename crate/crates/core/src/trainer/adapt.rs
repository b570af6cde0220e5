use super::config::TrainConfig;
use super::run::{evaluate_ppl, train_run, RunOptions, RunOutput};
use crate::corpus::Corpus;
use crate::error::Result;
use crate::kicore::{ScheduleSpec, TeacherRegistry};
use crate::model::{ModelConfig, Params};

/// Validation PPLs before and after continued training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptPpl {
    pub target_before: f64,
    pub target_after: f64,
    pub source_before: f64,
    pub source_after: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptOutput {
    pub run: RunOutput,
    pub ppl: AdaptPpl,
}

/// Continues training `student` on `domain_corpus` for `steps` steps under
/// `schedule`, measuring target and source valid PPL around it.
#[allow(clippy::too_many_arguments)]
pub fn adapt_domain(
    student: &Params<f32>,
    student_config: &ModelConfig,
    domain_corpus: &Corpus,
    teachers: Option<&TeacherRegistry>,
    steps: u64,
    schedule: ScheduleSpec,
    source_valid: &Corpus,
    train: &TrainConfig,
    opts: &RunOptions,
) -> Result<AdaptOutput> {
    let mut tc = train.clone();
    tc.total_steps = steps;
    tc.schedule = ScheduleSpec {
        total_steps: steps,
        ..schedule
    };
    tc.eval_every = tc.eval_every.clamp(1, steps.max(1));
    let ppl = |p: &Params<f32>, c: &Corpus| evaluate_ppl(p, student_config, c, tc.mask_seed, tc.mask_rate);
    let target_before = ppl(student, domain_corpus)?;
    let source_before = ppl(student, source_valid)?;
    let run = train_run(
        &tc,
        student_config,
        domain_corpus,
        teachers,
        &RunOptions {
            out_dir: opts.out_dir.clone(),
            init: Some(student.clone()),
        },
    )?;
    let target_after = ppl(&run.params, domain_corpus)?;
    let source_after = ppl(&run.params, source_valid)?;
    Ok(AdaptOutput {
        run,
        ppl: AdaptPpl {
            target_before,
            target_after,
            source_before,
            source_after,
        },
    })
}
