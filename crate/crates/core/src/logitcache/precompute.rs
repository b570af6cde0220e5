use sha2::{Digest, Sha256};

use super::{CacheBuilder, LogitCache};
use crate::corpus::{apply_masking, Corpus, MaskingConfig};
use crate::error::{KiError, Result};
use crate::kicore::topk_truncate;
use crate::model::{checkpoint_bytes, site_logits, temperature_softmax, Mode, ModelConfig, Params};

/// Sequences per teacher forward pass.
const CHUNK: usize = 32;

/// Runs the teacher over every train sequence of `corpus` with the masking
/// the student will see and keeps the top-`k` of its τ-softmax at each loss
/// position.
pub fn precompute_cache(
    teacher_params: &Params<f32>,
    teacher_config: &ModelConfig,
    corpus: &Corpus,
    masking: &MaskingConfig,
    tau: f64,
    k: usize,
) -> Result<LogitCache> {
    if teacher_config.vocab_size != corpus.vocab_size {
        return Err(KiError::VocabMismatch(format!(
            "teacher vocabulary {} vs corpus vocabulary {}",
            teacher_config.vocab_size, corpus.vocab_size
        )));
    }
    if masking.objective != teacher_config.objective {
        return Err(KiError::Config(format!(
            "masking objective {} differs from teacher objective {}",
            masking.objective, teacher_config.objective
        )));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(KiError::InvalidTemperature(tau));
    }
    if k < 1 || k > u16::MAX as usize {
        return Err(KiError::InvalidK(k));
    }
    if corpus.seq_len > u16::MAX as usize + 1 {
        return Err(KiError::Config("sequence length exceeds cache offset range".into()));
    }
    let hash: [u8; 32] = Sha256::digest(checkpoint_bytes(teacher_params, teacher_config)).into();
    let v = teacher_config.vocab_size;
    let mut b = CacheBuilder::new(teacher_config.objective, v as u32, k as u16, tau as f32, masking.seed, hash);
    let train: Vec<_> = corpus.train().collect();
    let mut scratch = Vec::with_capacity(k);
    for chunk in train.chunks(CHUNK) {
        let batch = match apply_masking(chunk, v, masking) {
            Ok(batch) => batch,
            Err(KiError::EmptyLossSupport) => {
                for s in chunk {
                    b.begin_sequence(s.seq_id)?;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        let z = site_logits(teacher_params, teacher_config, &batch, Mode::Eval)?;
        let mut rows = z.chunks(v);
        for (i, s) in chunk.iter().enumerate() {
            b.begin_sequence(s.seq_id)?;
            for &pos in &batch.loss_positions[i] {
                let row = rows.next().expect("one logit row per loss site");
                let dist = topk_truncate(&temperature_softmax(row, tau)?, k)?;
                scratch.clear();
                scratch.extend(
                    dist.entries()
                        .iter()
                        .map(|&(id, p)| (id, p as f32))
                        .filter(|e| e.1 > 0.0),
                );
                // f32 rounding can reorder near-ties; restore the canonical order
                scratch.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                b.push_position(pos as u16, &scratch)?;
            }
        }
    }
    Ok(b.finish())
}
