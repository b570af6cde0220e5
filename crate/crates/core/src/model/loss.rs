use super::tensor::Scalar;
use crate::corpus::MaskedBatch;
use crate::error::{KiError, Result};
use crate::kicore::{combined_loss, ki_loss_grad, label_smooth, SparseDistribution};

/// Dense logits `[B, S, V]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsTensor<T> {
    pub batch: usize,
    pub seq_len: usize,
    pub vocab: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> LogitsTensor<T> {
    pub fn row(&self, b: usize, pos: usize) -> &[T] {
        let start = (b * self.seq_len + pos) * self.vocab;
        &self.values[start..start + self.vocab]
    }

    pub fn row_f64(&self, b: usize, pos: usize) -> Vec<f64> {
        self.row(b, pos).iter().map(|x| x.as_f64()).collect()
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `p_k = exp(z_k/τ) / Σ_j exp(z_j/τ)`, evaluated with max subtraction.
pub fn temperature_softmax(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(KiError::InvalidTemperature(tau));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(KiError::NumericFailure("non-finite logit".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| ((z - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Mean cross-entropy at τ = 1 over every loss position of the batch.
pub fn self_loss<T: Scalar>(logits: &LogitsTensor<T>, batch: &MaskedBatch) -> Result<f64> {
    let sites = batch.loss_sites();
    if sites.is_empty() {
        return Err(KiError::EmptyLossSupport);
    }
    let mut total = 0.0;
    for &(b, p) in &sites {
        let z = logits.row_f64(b, p);
        total += log_sum_exp(&z) - z[batch.target(b, p) as usize];
    }
    let loss = total / sites.len() as f64;
    if !loss.is_finite() {
        return Err(KiError::NumericFailure("self loss is not finite".into()));
    }
    Ok(loss)
}

/// Scalar objective for one batch: `(1 − α)·L_self + α·τ²·KL(teacher ‖ student_τ)`,
/// each term mean-reduced over loss positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub alpha: f64,
    pub tau: f64,
    /// Label smoothing applied to the self-learning target; 0 disables it.
    pub label_smoothing: f64,
}

impl LossSpec {
    pub fn self_only() -> Self {
        LossSpec {
            alpha: 0.0,
            tau: 1.0,
            label_smoothing: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub loss_self: f64,
    /// Zero when α = 0 (the teacher is not consulted).
    pub loss_ki: f64,
    pub loss_total: f64,
    pub positions: usize,
}

/// Loss and its gradient with respect to the site logits `z` (`[R, V]`).
///
/// `teacher` is aligned with the rows of `z` and is only read when α > 0.
pub(crate) fn site_losses<T: Scalar>(
    z: &[T],
    targets: &[u32],
    vocab: usize,
    spec: &LossSpec,
    teacher: Option<&[SparseDistribution]>,
    want_grad: bool,
) -> Result<(LossBreakdown, Vec<T>)> {
    let r = targets.len();
    if r == 0 {
        return Err(KiError::EmptyLossSupport);
    }
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(KiError::Config(format!("alpha {} outside [0, 1]", spec.alpha)));
    }
    let use_ki = spec.alpha > 0.0;
    let teacher = if use_ki {
        let t = teacher.ok_or_else(|| {
            KiError::CacheMismatch("alpha > 0 but no teacher distributions supplied".into())
        })?;
        if t.len() != r {
            return Err(KiError::CacheMismatch(format!(
                "{} teacher distributions for {r} loss positions",
                t.len()
            )));
        }
        Some(t)
    } else {
        None
    };
    let smooth = if spec.label_smoothing > 0.0 {
        Some(spec.label_smoothing)
    } else {
        None
    };
    let inv_r = 1.0 / r as f64;
    let mut dz = if want_grad { vec![T::zero(); r * vocab] } else { Vec::new() };
    let mut sum_self = 0.0;
    let mut sum_ki = 0.0;
    let mut zf = vec![0.0f64; vocab];
    for i in 0..r {
        for (dst, src) in zf.iter_mut().zip(&z[i * vocab..(i + 1) * vocab]) {
            *dst = src.as_f64();
        }
        let t = targets[i] as usize;
        let lse = log_sum_exp(&zf);
        let smoothed = match smooth {
            Some(a) => Some(label_smooth(targets[i], a, vocab)?),
            None => None,
        };
        sum_self += match &smoothed {
            None => lse - zf[t],
            Some(y) => lse - y.iter().zip(&zf).map(|(yk, zk)| yk * zk).sum::<f64>(),
        };
        let ki = match teacher {
            Some(tv) => {
                let (loss, grad) = ki_loss_grad(&zf, &tv[i], spec.tau)?;
                sum_ki += loss;
                Some(grad)
            }
            None => None,
        };
        if want_grad {
            let row = &mut dz[i * vocab..(i + 1) * vocab];
            let self_w = (1.0 - spec.alpha) * inv_r;
            for k in 0..vocab {
                let p = (zf[k] - lse).exp();
                let y = match &smoothed {
                    None => {
                        if k == t {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Some(ys) => ys[k],
                };
                row[k] = T::from_f64(self_w * (p - y));
            }
            if let (Some(grad), Some(tv)) = (ki, teacher) {
                let ki_w = spec.alpha * inv_r;
                for (&(tok, _), g) in tv[i].entries().iter().zip(grad) {
                    let k = tok as usize;
                    row[k] = T::from_f64(row[k].as_f64() + ki_w * g);
                }
            }
        }
    }
    let loss_self = sum_self * inv_r;
    let loss_ki = if use_ki { sum_ki * inv_r } else { 0.0 };
    let loss_total = combined_loss(loss_self, loss_ki, spec.alpha)?;
    Ok((
        LossBreakdown {
            loss_self,
            loss_ki,
            loss_total,
            positions: r,
        },
        dz,
    ))
}
