//! Flat `section.key=value` run configuration files.
//!
//! ```text
//! # comment
//! model.objective=clm
//! train.total_steps=20000
//! schedule.strategy=linear
//! schedule.guided_steps=6000
//! ```
//! Absent keys keep their defaults; unknown keys are rejected.

use std::path::Path;
use std::str::FromStr;

use crate::error::{KiError, Result};
use crate::kicore::Strategy;
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

pub const KNOWN_KEYS: &[&str] = &[
    "model.objective",
    "model.n_layers",
    "model.d_model",
    "model.n_heads",
    "model.d_ffn",
    "model.vocab_size",
    "model.max_seq_len",
    "train.total_steps",
    "train.batch_size",
    "train.peak_lr",
    "train.warmup_frac",
    "train.weight_decay",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "train.dropout",
    "train.tau",
    "train.k",
    "train.seed",
    "train.eval_every",
    "train.mask_rate",
    "train.mask_seed",
    "train.label_smoothing",
    "schedule.strategy",
    "schedule.guided_steps",
    "schedule.constant_alpha",
];

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| KiError::Config(format!("{key}: cannot parse value {v:?}")))
}

/// Parses config text. `default_seed` applies when `train.seed` is absent.
/// A missing `schedule.guided_steps` defaults to 30% of `train.total_steps`;
/// a missing `train.eval_every` to `min(500, total_steps)`.
pub fn parse_config_str(text: &str, default_seed: Option<u64>) -> Result<(ModelConfig, TrainConfig)> {
    let mut m = ModelConfig::default();
    let mut t = TrainConfig::default();
    let mut guided: Option<u64> = None;
    let mut strategy = t.schedule.strategy;
    let mut constant_alpha = t.schedule.constant_alpha;
    let mut seed: Option<u64> = None;
    let mut eval_every: Option<u64> = None;
    let mut seen = std::collections::HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| KiError::Config(format!("line {}: expected key=value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !seen.insert(k.to_string()) {
            return Err(KiError::Config(format!("{k}: given twice")));
        }
        match k {
            "model.objective" => m.objective = value(k, v)?,
            "model.n_layers" => m.n_layers = value(k, v)?,
            "model.d_model" => m.d_model = value(k, v)?,
            "model.n_heads" => m.n_heads = value(k, v)?,
            "model.d_ffn" => m.d_ffn = value(k, v)?,
            "model.vocab_size" => m.vocab_size = value(k, v)?,
            "model.max_seq_len" => m.max_seq_len = value(k, v)?,
            "train.total_steps" => t.total_steps = value(k, v)?,
            "train.batch_size" => t.batch_size = value(k, v)?,
            "train.peak_lr" => t.peak_lr = value(k, v)?,
            "train.warmup_frac" => t.warmup_frac = value(k, v)?,
            "train.weight_decay" => t.weight_decay = value(k, v)?,
            "train.adam_beta1" => t.adam_beta1 = value(k, v)?,
            "train.adam_beta2" => t.adam_beta2 = value(k, v)?,
            "train.adam_eps" => t.adam_eps = value(k, v)?,
            "train.dropout" => t.dropout = value(k, v)?,
            "train.tau" => t.tau = value(k, v)?,
            "train.k" => t.k = value(k, v)?,
            "train.seed" => seed = Some(value(k, v)?),
            "train.eval_every" => eval_every = Some(value(k, v)?),
            "train.mask_rate" => t.mask_rate = value(k, v)?,
            "train.mask_seed" => t.mask_seed = value(k, v)?,
            "train.label_smoothing" => t.label_smoothing = value(k, v)?,
            "schedule.strategy" => strategy = value::<Strategy>(k, v)?,
            "schedule.guided_steps" => guided = Some(value(k, v)?),
            "schedule.constant_alpha" => constant_alpha = value(k, v)?,
            other => return Err(KiError::Config(format!("unknown key {other}"))),
        }
    }
    t.seed = seed.or(default_seed).unwrap_or(0);
    t.eval_every = eval_every.unwrap_or_else(|| t.total_steps.clamp(1, 500));
    t.schedule.strategy = strategy;
    t.schedule.total_steps = t.total_steps;
    t.schedule.guided_steps = guided.unwrap_or((t.total_steps as f64 * 0.3).round() as u64);
    t.schedule.constant_alpha = constant_alpha;
    m.dropout = t.dropout;
    m.validate()?;
    t.validate()?;
    Ok((m, t))
}

/// Reads and parses a config file; `KI_SEED` supplies the seed when the file
/// has none.
pub fn parse_config(path: &Path) -> Result<(ModelConfig, TrainConfig)> {
    let text = std::fs::read_to_string(path).map_err(|e| KiError::Config(format!("{}: {e}", path.display())))?;
    let env_seed = match std::env::var("KI_SEED") {
        Ok(s) => Some(value::<u64>("KI_SEED", s.trim())?),
        Err(_) => None,
    };
    parse_config_str(&text, env_seed)
}
