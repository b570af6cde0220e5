use crate::error::{KiError, Result};
use crate::kicore::{ScheduleSpec, Strategy};

/// Optimisation settings for one run. Defaults are the desk-scale setup with
/// the usual RoBERTa-style optimiser constants.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub total_steps: u64,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub dropout: f64,
    pub schedule: ScheduleSpec,
    pub tau: f64,
    pub k: usize,
    pub seed: u64,
    pub eval_every: u64,
    pub mask_rate: f64,
    /// Seed of the static masks; must match the teacher cache.
    pub mask_seed: u64,
    /// Label smoothing on the self-learning target.
    pub label_smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 20_000,
            batch_size: 32,
            peak_lr: 5e-4,
            warmup_frac: 0.10,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-6,
            dropout: 0.1,
            schedule: ScheduleSpec::new(Strategy::Linear, 20_000, 6_000),
            tau: 2.0,
            k: 10,
            seed: 0,
            eval_every: 500,
            mask_rate: 0.15,
            mask_seed: 0,
            label_smoothing: 0.0,
        }
    }
}

impl TrainConfig {
    /// Sets `total_steps` and keeps the schedule horizon in sync. A linear
    /// or heviside schedule keeps its guided fraction.
    pub fn with_steps(mut self, total_steps: u64) -> Self {
        let old = self.schedule.total_steps;
        if old > 0 {
            self.schedule.guided_steps =
                (self.schedule.guided_steps as f64 * total_steps as f64 / old as f64).round() as u64;
        }
        self.schedule.guided_steps = self.schedule.guided_steps.min(total_steps);
        self.schedule.total_steps = total_steps;
        self.total_steps = total_steps;
        self.eval_every = self.eval_every.min(total_steps.max(1));
        self
    }

    pub fn with_schedule(mut self, strategy: Strategy, guided_steps: u64) -> Self {
        self.schedule = ScheduleSpec {
            strategy,
            total_steps: self.total_steps,
            guided_steps,
            constant_alpha: self.schedule.constant_alpha,
        };
        self
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_frac * self.total_steps as f64).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64, hi_open: bool| -> Result<()> {
            let ok = v >= 0.0 && if hi_open { v < 1.0 } else { v <= 1.0 };
            if ok {
                Ok(())
            } else {
                Err(KiError::Config(format!("{name} = {v} out of range")))
            }
        };
        unit("train.warmup_frac", self.warmup_frac, false)?;
        unit("train.adam_beta1", self.adam_beta1, true)?;
        unit("train.adam_beta2", self.adam_beta2, true)?;
        unit("train.dropout", self.dropout, true)?;
        unit("train.mask_rate", self.mask_rate, false)?;
        if !(self.peak_lr >= 0.0) || !self.peak_lr.is_finite() {
            return Err(KiError::Config(format!("train.peak_lr = {} out of range", self.peak_lr)));
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return Err(KiError::Config("weight decay must be >= 0 and adam eps > 0".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(KiError::InvalidAlpha(self.label_smoothing));
        }
        if self.batch_size == 0 {
            return Err(KiError::Config("train.batch_size must be positive".into()));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(KiError::InvalidTemperature(self.tau));
        }
        if self.k < 1 {
            return Err(KiError::InvalidK(self.k));
        }
        if self.eval_every == 0 || (self.total_steps > 0 && self.eval_every > self.total_steps) {
            return Err(KiError::Config(format!(
                "train.eval_every = {} must be in [1, total_steps]",
                self.eval_every
            )));
        }
        if self.schedule.total_steps != self.total_steps {
            return Err(KiError::Config(format!(
                "schedule horizon {} differs from train.total_steps {}",
                self.schedule.total_steps, self.total_steps
            )));
        }
        self.schedule.validate()
    }
}

/// Linear warmup to `peak_lr` over the first `warmup_frac·T` steps, then
/// linear decay to 0 at `T`.
pub fn lr_at(t: u64, config: &TrainConfig) -> f64 {
    let total = config.total_steps;
    if total == 0 || t >= total {
        return 0.0;
    }
    let warm = config.warmup_steps();
    let peak = config.peak_lr;
    if t <= warm {
        if warm == 0 {
            peak
        } else {
            peak * t as f64 / warm as f64
        }
    } else {
        peak * (total - t) as f64 / (total - warm) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(total: u64) -> TrainConfig {
        TrainConfig {
            peak_lr: 1e-3,
            ..TrainConfig::default()
        }
        .with_steps(total)
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.adam_beta1, c.adam_beta2, c.adam_eps), (0.9, 0.98, 1e-6));
        assert_eq!((c.weight_decay, c.dropout, c.warmup_frac), (0.01, 0.1, 0.10));
        assert_eq!(c.schedule.guided_steps, 6_000);
        c.validate().unwrap();
    }

    #[test]
    fn lr_examples() {
        let c = cfg(20_000);
        assert_eq!(lr_at(0, &c), 0.0);
        assert_eq!(lr_at(2_000, &c), 1e-3);
        assert_eq!(lr_at(20_000, &c), 0.0);
        assert!((lr_at(1_000, &c) - 5e-4).abs() < 1e-15);
        assert!((lr_at(11_000, &c) - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn with_steps_rescales_guided_phase() {
        let c = TrainConfig::default().with_steps(1_000);
        assert_eq!(c.schedule.guided_steps, 300);
        assert_eq!(c.schedule.total_steps, 1_000);
        c.validate().unwrap();
    }

    proptest! {
        #[test]
        fn lr_piecewise_linear_peak_at_warmup(total in 10u64..5000, t in 0u64..5000) {
            let c = cfg(total);
            let t = t % (total + 1);
            let warm = c.warmup_steps();
            let lr = lr_at(t, &c);
            prop_assert!(lr >= 0.0 && lr <= c.peak_lr);
            prop_assert_eq!(lr_at(warm, &c), c.peak_lr);
            if t > 0 && t < total {
                // continuity: neighbouring steps differ by at most one slope unit
                let slope = c.peak_lr / warm.max(1).min(total - warm).max(1) as f64;
                prop_assert!((lr_at(t + 1, &c) - lr).abs() <= slope + 1e-15);
            }
        }
    }
}
