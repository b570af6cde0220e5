//! A small pre-LN transformer usable as an MLM encoder or a CLM decoder.

mod checkpoint;
mod config;
mod forward;
mod loss;
mod params;
mod tensor;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_hash, parse_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
};
pub use config::ModelConfig;
pub use forward::Mode;
pub use loss::{self_loss, temperature_softmax, LogitsTensor, LossBreakdown, LossSpec};
pub use params::{layout, Params, Tensor, TensorKind};
pub use tensor::Scalar;

use crate::corpus::MaskedBatch;
use crate::error::{KiError, Result};
use crate::kicore::SparseDistribution;

pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Params<f32>> {
    Params::init(config, seed)
}

fn check_batch<T: Scalar>(params: &Params<T>, cfg: &ModelConfig, batch: &MaskedBatch) -> Result<()> {
    cfg.validate()?;
    params.check_layout(cfg)?;
    if batch.seq_len > cfg.max_seq_len {
        return Err(KiError::Config(format!(
            "sequence length {} exceeds max_seq_len {}",
            batch.seq_len, cfg.max_seq_len
        )));
    }
    if batch.input_ids.len() != batch.batch_size * batch.seq_len
        || batch.loss_positions.len() != batch.batch_size
    {
        return Err(KiError::Config("malformed batch".into()));
    }
    let v = cfg.vocab_size as u32;
    if let Some(id) = batch.input_ids.iter().chain(&batch.target_ids).find(|&&id| id >= v) {
        return Err(KiError::VocabMismatch(format!(
            "token id {id} outside model vocabulary of {v}"
        )));
    }
    Ok(())
}

fn site_rows(batch: &MaskedBatch) -> Vec<usize> {
    batch
        .loss_sites()
        .into_iter()
        .map(|(b, p)| b * batch.seq_len + p)
        .collect()
}

/// Dense `[B, S, V]` logits.
pub fn forward_logits<T: Scalar>(
    params: &Params<T>,
    batch: &MaskedBatch,
    config: &ModelConfig,
    mode: Mode,
) -> Result<LogitsTensor<T>> {
    check_batch(params, config, batch)?;
    let (b, s, v) = (batch.batch_size, batch.seq_len, config.vocab_size);
    let cache = forward::forward(params, config, &batch.input_ids, b, s, mode);
    let values = forward::head(params, &cache.hidden, b * s, config.d_model, v);
    if values.iter().any(|x| !x.is_finite()) {
        return Err(KiError::NumericFailure("non-finite logits".into()));
    }
    Ok(LogitsTensor {
        batch: b,
        seq_len: s,
        vocab: v,
        values,
    })
}

/// Logits at the loss sites only, `[R, V]` in `batch.loss_sites()` order, widened to f64.
pub fn site_logits<T: Scalar>(params: &Params<T>, config: &ModelConfig, batch: &MaskedBatch, mode: Mode) -> Result<Vec<f64>> {
    check_batch(params, config, batch)?;
    let rows = site_rows(batch);
    let cache = forward::forward(params, config, &batch.input_ids, batch.batch_size, batch.seq_len, mode);
    let sel = forward::gather_rows(&cache.hidden, &rows, config.d_model);
    let z = forward::head(params, &sel, rows.len(), config.d_model, config.vocab_size);
    let out: Vec<f64> = z.iter().map(|x| x.as_f64()).collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(KiError::NumericFailure("non-finite logits".into()));
    }
    Ok(out)
}

fn site_targets(batch: &MaskedBatch) -> Vec<u32> {
    batch.loss_sites().into_iter().map(|(b, p)| batch.target(b, p)).collect()
}

/// Loss of `spec` on `batch` without gradients.
pub fn evaluate_loss<T: Scalar>(
    params: &Params<T>,
    config: &ModelConfig,
    batch: &MaskedBatch,
    spec: &LossSpec,
    teacher: Option<&[SparseDistribution]>,
    mode: Mode,
) -> Result<LossBreakdown> {
    check_batch(params, config, batch)?;
    let rows = site_rows(batch);
    let cache = forward::forward(params, config, &batch.input_ids, batch.batch_size, batch.seq_len, mode);
    let sel = forward::gather_rows(&cache.hidden, &rows, config.d_model);
    let z = forward::head(params, &sel, rows.len(), config.d_model, config.vocab_size);
    let (br, _) = loss::site_losses(&z, &site_targets(batch), config.vocab_size, spec, teacher, false)?;
    Ok(br)
}

/// Exact gradients of `spec` on `batch` for every parameter.
///
/// `teacher` holds one distribution per loss site in `batch.loss_sites()`
/// order and is ignored when `spec.alpha == 0`.
pub fn loss_gradients<T: Scalar>(
    params: &Params<T>,
    config: &ModelConfig,
    batch: &MaskedBatch,
    spec: &LossSpec,
    teacher: Option<&[SparseDistribution]>,
    mode: Mode,
) -> Result<(LossBreakdown, Params<T>)> {
    check_batch(params, config, batch)?;
    let rows = site_rows(batch);
    let cache = forward::forward(params, config, &batch.input_ids, batch.batch_size, batch.seq_len, mode);
    let sel = forward::gather_rows(&cache.hidden, &rows, config.d_model);
    let z = forward::head(params, &sel, rows.len(), config.d_model, config.vocab_size);
    let (br, dz) = loss::site_losses(&z, &site_targets(batch), config.vocab_size, spec, teacher, true)?;
    let grads = forward::backward(params, config, &cache, &rows, &sel, &dz);
    if !grads.all_finite() {
        return Err(KiError::NumericFailure("non-finite gradient".into()));
    }
    Ok((br, grads))
}
