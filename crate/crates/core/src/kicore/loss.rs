use super::distribution::{kl_divergence_sparse, SparseDistribution};
use crate::error::{KiError, Result};
use crate::model::temperature_softmax;

/// Relative tolerance used when comparing a run's τ with a cache header's τ
/// (the header stores τ as f32).
const TAU_TOL: f64 = 1e-6;

/// Rejects a teacher produced at a different temperature than the run uses.
pub fn check_temperature(run_tau: f64, teacher_tau: f64) -> Result<()> {
    if (run_tau - teacher_tau).abs() > TAU_TOL * run_tau.abs().max(1.0) {
        return Err(KiError::TemperatureMismatch {
            run: run_tau,
            cache: teacher_tau,
        });
    }
    Ok(())
}

/// `τ² · KL(teacher ‖ student_τ)` with the student renormalised over the
/// teacher's support.
pub fn ki_loss(student_logits_row: &[f64], teacher_dist: &SparseDistribution, tau: f64) -> Result<f64> {
    let q = temperature_softmax(student_logits_row, tau)?;
    Ok(tau * tau * kl_divergence_sparse(teacher_dist, &q)?)
}

/// Same as [`ki_loss`], checking the teacher's recorded temperature first.
pub fn ki_loss_checked(
    student_logits_row: &[f64],
    teacher_dist: &SparseDistribution,
    tau: f64,
    teacher_tau: f64,
) -> Result<f64> {
    check_temperature(tau, teacher_tau)?;
    ki_loss(student_logits_row, teacher_dist, tau)
}

/// KI loss for one row and its gradient with respect to the logits on the
/// teacher's support, in the order of `teacher.entries()`. Off-support
/// gradients are zero.
pub(crate) fn ki_loss_grad(z: &[f64], teacher: &SparseDistribution, tau: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(KiError::InvalidTemperature(tau));
    }
    let ent = teacher.entries();
    let mut s = Vec::with_capacity(ent.len());
    for &(k, _) in ent {
        let zk = *z.get(k as usize).ok_or(KiError::SupportMismatch(k))?;
        s.push(zk / tau);
    }
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + s.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    let mut kl = 0.0;
    let mut grad = Vec::with_capacity(ent.len());
    for (&(_, p), &sk) in ent.iter().zip(&s) {
        let log_q = sk - lse;
        kl += p * (p.ln() - log_q);
        grad.push(tau * (log_q.exp() - p));
    }
    let loss = tau * tau * kl.max(0.0);
    if !loss.is_finite() {
        return Err(KiError::NumericFailure("KI loss is not finite".into()));
    }
    Ok((loss, grad))
}

/// `(1 − α)·l_self + α·l_ki`. The degenerate ends return an input exactly.
pub fn combined_loss(l_self: f64, l_ki: f64, alpha_t: f64) -> Result<f64> {
    if !l_self.is_finite() || !l_ki.is_finite() || !alpha_t.is_finite() {
        return Err(KiError::NumericFailure(format!(
            "combined loss inputs self={l_self} ki={l_ki} alpha={alpha_t}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha_t) {
        return Err(KiError::InvalidAlpha(alpha_t));
    }
    Ok(if alpha_t == 0.0 {
        l_self
    } else if alpha_t == 1.0 {
        l_ki
    } else {
        (1.0 - alpha_t) * l_self + alpha_t * l_ki
    })
}

/// Smoothed target: `1 − α` on the target and `α/(V − 1)` elsewhere.
pub fn label_smooth(target_id: u32, alpha: f64, vocab_size: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(KiError::InvalidAlpha(alpha));
    }
    if vocab_size < 2 {
        return Err(KiError::Config(format!("label smoothing needs V >= 2, got {vocab_size}")));
    }
    let t = target_id as usize;
    if t >= vocab_size {
        return Err(KiError::VocabMismatch(format!(
            "target {target_id} outside vocabulary of {vocab_size}"
        )));
    }
    let other = alpha / (vocab_size - 1) as f64;
    let mut y = vec![other; vocab_size];
    // fix the target so the f64 sum is as close to 1 as representable
    let rest: f64 = y.iter().enumerate().filter(|(i, _)| *i != t).map(|(_, v)| v).sum();
    y[t] = if alpha == 0.0 { 1.0 } else { 1.0 - rest };
    Ok(y)
}
