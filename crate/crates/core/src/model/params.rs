use rand::Rng;

use super::config::ModelConfig;
use super::tensor::Scalar;
use crate::error::{KiError, Result};
use crate::rng::{keyed2, stream};

pub(crate) const TOK_EMB: usize = 0;
pub(crate) const POS_EMB: usize = 1;
pub(crate) const PER_LAYER: usize = 16;

/// Offsets of the per-layer tensors relative to the layer's base index.
pub(crate) mod slot {
    pub const LN1_G: usize = 0;
    pub const LN1_B: usize = 1;
    pub const WQ: usize = 2;
    pub const BQ: usize = 3;
    pub const WK: usize = 4;
    pub const BK: usize = 5;
    pub const WV: usize = 6;
    pub const BV: usize = 7;
    pub const WO: usize = 8;
    pub const BO: usize = 9;
    pub const LN2_G: usize = 10;
    pub const LN2_B: usize = 11;
    pub const W1: usize = 12;
    pub const B1: usize = 13;
    pub const W2: usize = 14;
    pub const B2: usize = 15;
}

const SLOT_NAMES: [&str; PER_LAYER] = [
    "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo", "attn.bo", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

pub(crate) fn layer_base(layer: usize) -> usize {
    2 + layer * PER_LAYER
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    /// Matrices and embeddings: truncated-normal init, weight decay applies.
    Weight,
    Bias,
    NormGain,
    NormBias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
    pub data: Vec<T>,
}

/// All learned weights of one model. The output projection is tied to
/// `tok_emb`. Linear maps are stored `[in, out]` so `y = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub tensors: Vec<Tensor<T>>,
}

/// Name, shape and kind of every tensor implied by a config, in storage order.
pub fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, TensorKind)> {
    use TensorKind::*;
    let (d, f) = (cfg.d_model, cfg.d_ffn);
    let mut out = vec![
        ("tok_emb".to_string(), vec![cfg.vocab_size, d], Weight),
        ("pos_emb".to_string(), vec![cfg.max_seq_len, d], Weight),
    ];
    for l in 0..cfg.n_layers {
        let shapes: [(Vec<usize>, TensorKind); PER_LAYER] = [
            (vec![d], NormGain),
            (vec![d], NormBias),
            (vec![d, d], Weight),
            (vec![d], Bias),
            (vec![d, d], Weight),
            (vec![d], Bias),
            (vec![d, d], Weight),
            (vec![d], Bias),
            (vec![d, d], Weight),
            (vec![d], Bias),
            (vec![d], NormGain),
            (vec![d], NormBias),
            (vec![d, f], Weight),
            (vec![f], Bias),
            (vec![f, d], Weight),
            (vec![d], Bias),
        ];
        for (name, (shape, kind)) in SLOT_NAMES.iter().zip(shapes) {
            out.push((format!("layers.{l}.{name}"), shape, kind));
        }
    }
    out
}

const INIT_STD: f64 = 0.02;

fn truncated_normal(rng: &mut impl Rng, std: f64) -> f64 {
    // Box-Muller, resampling outside two standard deviations.
    loop {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<T: Scalar> Params<T> {
    /// Truncated normal (std 0.02) weights, zero biases, unit norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let tensors = layout(cfg)
            .into_iter()
            .enumerate()
            .map(|(i, (name, shape, kind))| {
                let n: usize = shape.iter().product();
                let data = match kind {
                    TensorKind::Weight => {
                        let mut rng = keyed2(seed, stream::INIT, i as u64);
                        (0..n)
                            .map(|_| T::from_f64(truncated_normal(&mut rng, INIT_STD)))
                            .collect()
                    }
                    TensorKind::NormGain => vec![T::one(); n],
                    TensorKind::Bias | TensorKind::NormBias => vec![T::zero(); n],
                };
                Tensor {
                    name,
                    shape,
                    kind,
                    data,
                }
            })
            .collect();
        Ok(Params { tensors })
    }

    /// Same layout, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    kind: t.kind,
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    kind: t.kind,
                    data: t.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Checks names and shapes against the layout a config implies.
    pub fn check_layout(&self, cfg: &ModelConfig) -> Result<()> {
        let want = layout(cfg);
        if want.len() != self.tensors.len() {
            return Err(KiError::FormatError(format!(
                "expected {} tensors, found {}",
                want.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape, _), t) in want.iter().zip(&self.tensors) {
            if *name != t.name || *shape != t.shape {
                return Err(KiError::FormatError(format!(
                    "tensor {} {:?} does not match expected {name} {shape:?}",
                    t.name, t.shape
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn t(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }

    pub(crate) fn t_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.tensors[idx].data
    }
}
