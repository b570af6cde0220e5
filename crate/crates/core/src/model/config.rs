use crate::corpus::Objective;
use crate::error::{KiError, Result};

/// Transformer hyper-parameters. `vocab_size` is the class count of both
/// objectives; `max_seq_len` sizes the learned positional table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub objective: Objective,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    /// Desk-scale student: 4 layers, width 256, 8 heads, FFN 1024, 128 positions.
    fn default() -> Self {
        ModelConfig {
            objective: Objective::Mlm,
            n_layers: 4,
            d_model: 256,
            n_heads: 8,
            d_ffn: 1024,
            vocab_size: 8000,
            max_seq_len: 128,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Desk-scale teacher: 2 layers, width 128, 4 heads, FFN 512.
    pub fn desk_teacher() -> Self {
        ModelConfig {
            n_layers: 2,
            d_model: 128,
            n_heads: 4,
            d_ffn: 512,
            ..ModelConfig::default()
        }
    }

    /// Convenience constructor used heavily by tests and experiments.
    pub fn shape(
        objective: Objective,
        n_layers: usize,
        d_model: usize,
        n_heads: usize,
        d_ffn: usize,
        vocab_size: usize,
        max_seq_len: usize,
    ) -> Self {
        ModelConfig {
            objective,
            n_layers,
            d_model,
            n_heads,
            d_ffn,
            vocab_size,
            max_seq_len,
            dropout: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(KiError::Config(msg));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ffn == 0 {
            return fail("layer count, widths and head count must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.vocab_size < 6 {
            return fail(format!("vocab_size {} < 6", self.vocab_size));
        }
        if self.max_seq_len < 2 {
            return fail(format!("max_seq_len {} < 2", self.max_seq_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// `V·d + S·d + L·(4d² + 4d + 2·d·ffn + d + ffn + 4d)`.
    pub fn param_count(&self) -> usize {
        let (v, s, l, d, f) = (
            self.vocab_size,
            self.max_seq_len,
            self.n_layers,
            self.d_model,
            self.d_ffn,
        );
        v * d + s * d + l * (4 * d * d + 4 * d + 2 * d * f + d + f + 4 * d)
    }

    pub fn to_header(&self) -> String {
        format!(
            "objective={} n_layers={} d_model={} n_heads={} d_ffn={} vocab_size={} max_seq_len={} dropout={}",
            self.objective,
            self.n_layers,
            self.d_model,
            self.n_heads,
            self.d_ffn,
            self.vocab_size,
            self.max_seq_len,
            self.dropout
        )
    }

    pub fn from_header(line: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        let mut seen = 0;
        for field in line.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| KiError::FormatError(format!("bad config field {field:?}")))?;
            let num = || {
                v.parse::<usize>()
                    .map_err(|_| KiError::FormatError(format!("bad value for {k}: {v:?}")))
            };
            match k {
                "objective" => cfg.objective = v.parse()?,
                "n_layers" => cfg.n_layers = num()?,
                "d_model" => cfg.d_model = num()?,
                "n_heads" => cfg.n_heads = num()?,
                "d_ffn" => cfg.d_ffn = num()?,
                "vocab_size" => cfg.vocab_size = num()?,
                "max_seq_len" => cfg.max_seq_len = num()?,
                "dropout" => {
                    cfg.dropout = v
                        .parse()
                        .map_err(|_| KiError::FormatError(format!("bad dropout {v:?}")))?
                }
                other => return Err(KiError::FormatError(format!("unknown field {other}"))),
            }
            seen += 1;
        }
        if seen != 8 {
            return Err(KiError::FormatError(
                "model config header must list all 8 fields".into(),
            ));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
