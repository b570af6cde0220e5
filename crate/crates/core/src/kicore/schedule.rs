use std::fmt;
use std::str::FromStr;

use crate::error::{KiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Linear,
    Heviside,
    Constant,
    SelfOnly,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Linear => "linear",
            Strategy::Heviside => "heviside",
            Strategy::Constant => "constant",
            Strategy::SelfOnly => "self_only",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = KiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Strategy::Linear),
            "heviside" => Ok(Strategy::Heviside),
            "constant" => Ok(Strategy::Constant),
            "self_only" | "self-only" | "none" => Ok(Strategy::SelfOnly),
            other => Err(KiError::Config(format!("unknown schedule strategy '{other}'"))),
        }
    }
}

/// Inheritance-rate schedule over `total_steps` optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub strategy: Strategy,
    pub total_steps: u64,
    /// Linear: step at which α reaches 0. Heviside: switch step.
    pub guided_steps: u64,
    pub constant_alpha: f64,
}

impl ScheduleSpec {
    pub fn new(strategy: Strategy, total_steps: u64, guided_steps: u64) -> Self {
        ScheduleSpec {
            strategy,
            total_steps,
            guided_steps,
            constant_alpha: 0.5,
        }
    }

    pub fn self_only(total_steps: u64) -> Self {
        Self::new(Strategy::SelfOnly, total_steps, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.guided_steps > self.total_steps {
            return Err(KiError::Config(format!(
                "guided_steps {} exceeds total_steps {}",
                self.guided_steps, self.total_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.constant_alpha) {
            return Err(KiError::InvalidAlpha(self.constant_alpha));
        }
        Ok(())
    }

    /// `α_T = T / guided_steps`, the slope multiplier of the linear schedule.
    pub fn alpha_slope(&self) -> Option<f64> {
        (self.guided_steps > 0).then(|| self.total_steps as f64 / self.guided_steps as f64)
    }

    /// True when at least one step of the run consults a teacher.
    pub fn uses_teacher(&self) -> bool {
        match self.strategy {
            Strategy::Linear | Strategy::Heviside => self.guided_steps > 0,
            Strategy::Constant => self.constant_alpha > 0.0,
            Strategy::SelfOnly => false,
        }
    }
}

/// α_t for step `t` in `[0, T]`.
pub fn inheritance_rate(t: u64, spec: &ScheduleSpec) -> Result<f64> {
    if t > spec.total_steps {
        return Err(KiError::StepOutOfRange {
            step: t,
            total: spec.total_steps,
        });
    }
    spec.validate()?;
    Ok(match spec.strategy {
        Strategy::Linear => {
            if spec.guided_steps == 0 {
                0.0
            } else {
                (1.0 - t as f64 / spec.guided_steps as f64).max(0.0)
            }
        }
        Strategy::Heviside => {
            if t < spec.guided_steps {
                1.0
            } else {
                0.0
            }
        }
        Strategy::Constant => spec.constant_alpha,
        Strategy::SelfOnly => 0.0,
    })
}
