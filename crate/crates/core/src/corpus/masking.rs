use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::encode::Sequence;
use super::vocab::{BOS, EOS, MASK, NUM_SPECIALS, PAD};
use crate::error::{KiError, Result};
use crate::rng::keyed;

/// Pre-training objective: masked (bidirectional) or causal language modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Mlm,
    Clm,
}

impl Objective {
    pub fn code(self) -> u8 {
        match self {
            Objective::Mlm => 0,
            Objective::Clm => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Objective::Mlm),
            1 => Some(Objective::Clm),
            _ => None,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Mlm => "mlm",
            Objective::Clm => "clm",
        })
    }
}

impl FromStr for Objective {
    type Err = KiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlm" => Ok(Objective::Mlm),
            "clm" => Ok(Objective::Clm),
            other => Err(KiError::Config(format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskingConfig {
    pub objective: Objective,
    pub mask_rate: f64,
    pub seed: u64,
}

/// Model input plus supervision for a batch of sequences, row-major `[B, S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub batch_size: usize,
    pub seq_len: usize,
    pub input_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    /// Per example, ascending positions that carry loss.
    pub loss_positions: Vec<Vec<usize>>,
    pub domain_tags: Vec<String>,
    pub seq_ids: Vec<u64>,
}

impl MaskedBatch {
    pub fn num_loss_positions(&self) -> usize {
        self.loss_positions.iter().map(Vec::len).sum()
    }

    pub fn input_row(&self, b: usize) -> &[u32] {
        &self.input_ids[b * self.seq_len..(b + 1) * self.seq_len]
    }

    pub fn target(&self, b: usize, pos: usize) -> u32 {
        self.target_ids[b * self.seq_len + pos]
    }

    /// Sub-batch made of the given examples, in the given order.
    pub fn select(&self, examples: &[usize]) -> MaskedBatch {
        let s = self.seq_len;
        let mut out = MaskedBatch {
            batch_size: examples.len(),
            seq_len: s,
            input_ids: Vec::with_capacity(examples.len() * s),
            target_ids: Vec::with_capacity(examples.len() * s),
            loss_positions: Vec::with_capacity(examples.len()),
            domain_tags: Vec::with_capacity(examples.len()),
            seq_ids: Vec::with_capacity(examples.len()),
        };
        for &b in examples {
            out.input_ids.extend_from_slice(self.input_row(b));
            out.target_ids.extend_from_slice(&self.target_ids[b * s..(b + 1) * s]);
            out.loss_positions.push(self.loss_positions[b].clone());
            out.domain_tags.push(self.domain_tags[b].clone());
            out.seq_ids.push(self.seq_ids[b]);
        }
        out
    }

    /// Flat `(b, pos)` pairs in batch order; the row order used for logits at loss sites.
    pub fn loss_sites(&self) -> Vec<(usize, usize)> {
        self.loss_positions
            .iter()
            .enumerate()
            .flat_map(|(b, ps)| ps.iter().map(move |&p| (b, p)))
            .collect()
    }
}

fn maskable(id: u32) -> bool {
    !matches!(id, PAD | MASK | BOS | EOS)
}

/// Static masking: the same `(seed, seq_id)` always yields the same corruption,
/// so teacher predictions computed offline line up with student inputs.
///
/// MLM selects each eligible position with probability `mask_rate`; of the
/// selected ones 80% become MASK, 10% a uniformly random regular token and
/// 10% stay unchanged. CLM predicts the next token at positions `0..S-1`.
pub fn apply_masking(
    sequences: &[&Sequence],
    vocab_size: usize,
    cfg: &MaskingConfig,
) -> Result<MaskedBatch> {
    if !(0.0..=1.0).contains(&cfg.mask_rate) {
        return Err(KiError::Config(format!(
            "mask_rate {} outside [0, 1]",
            cfg.mask_rate
        )));
    }
    let seq_len = sequences.first().map_or(0, |s| s.ids.len());
    let mut batch = MaskedBatch {
        batch_size: sequences.len(),
        seq_len,
        input_ids: Vec::with_capacity(sequences.len() * seq_len),
        target_ids: Vec::with_capacity(sequences.len() * seq_len),
        loss_positions: Vec::with_capacity(sequences.len()),
        domain_tags: Vec::with_capacity(sequences.len()),
        seq_ids: Vec::with_capacity(sequences.len()),
    };
    for seq in sequences {
        if seq.ids.len() != seq_len {
            return Err(KiError::FormatError("ragged batch".into()));
        }
        let (input, target, positions) = match cfg.objective {
            Objective::Mlm => mask_mlm(seq, vocab_size, cfg),
            Objective::Clm => shift_clm(seq),
        };
        batch.input_ids.extend(input);
        batch.target_ids.extend(target);
        batch.loss_positions.push(positions);
        batch.domain_tags.push(seq.domain.clone());
        batch.seq_ids.push(seq.seq_id);
    }
    if batch.num_loss_positions() == 0 {
        return Err(KiError::EmptyLossSupport);
    }
    Ok(batch)
}

fn mask_mlm(seq: &Sequence, vocab_size: usize, cfg: &MaskingConfig) -> (Vec<u32>, Vec<u32>, Vec<usize>) {
    let mut rng = keyed(cfg.seed, seq.seq_id);
    let mut input = seq.ids.clone();
    let mut positions = Vec::new();
    for (pos, &tok) in seq.ids.iter().enumerate() {
        if !maskable(tok) {
            continue;
        }
        if rng.random::<f64>() >= cfg.mask_rate {
            continue;
        }
        positions.push(pos);
        let r: f64 = rng.random();
        if r < 0.8 {
            input[pos] = MASK;
        } else if r < 0.9 && vocab_size > NUM_SPECIALS {
            input[pos] = rng.random_range(NUM_SPECIALS as u32..vocab_size as u32);
        }
    }
    (input, seq.ids.clone(), positions)
}

fn shift_clm(seq: &Sequence) -> (Vec<u32>, Vec<u32>, Vec<usize>) {
    let s = seq.ids.len();
    let mut target = vec![PAD; s];
    target[..s - 1].copy_from_slice(&seq.ids[1..]);
    let positions = (0..s - 1).filter(|&p| target[p] != PAD).collect();
    (seq.ids.clone(), target, positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::encode::Split;
    use crate::corpus::vocab::UNK;

    fn seq(id: u64, ids: Vec<u32>) -> Sequence {
        Sequence {
            seq_id: id,
            split: Split::Train,
            domain: "d".into(),
            ids,
        }
    }

    fn mlm(rate: f64, seed: u64) -> MaskingConfig {
        MaskingConfig {
            objective: Objective::Mlm,
            mask_rate: rate,
            seed,
        }
    }

    #[test]
    fn zero_rate_has_no_support() {
        let s = seq(0, vec![5, 6, 7, 8]);
        assert!(matches!(
            apply_masking(&[&s], 10, &mlm(0.0, 1)),
            Err(KiError::EmptyLossSupport)
        ));
    }

    #[test]
    fn clm_shift() {
        let s = seq(0, vec![BOS, 5, 6, 7]);
        let cfg = MaskingConfig {
            objective: Objective::Clm,
            mask_rate: 0.5,
            seed: 0,
        };
        let b = apply_masking(&[&s], 10, &cfg).unwrap();
        assert_eq!(b.input_ids, vec![BOS, 5, 6, 7]);
        assert_eq!(&b.target_ids[..3], &[5, 6, 7]);
        assert_eq!(b.loss_positions, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn selection_rate_within_binomial_interval() {
        // 100 sequences x 100 eligible tokens
        let seqs: Vec<Sequence> = (0..100)
            .map(|i| seq(i, (0..100).map(|j| 5 + (j % 50) as u32).collect()))
            .collect();
        let refs: Vec<&Sequence> = seqs.iter().collect();
        let b = apply_masking(&refs, 60, &mlm(0.15, 42)).unwrap();
        let n = b.num_loss_positions();
        assert!((1350..=1650).contains(&n), "selected {n}");
        // replacement split roughly 80/10/10
        let sites = b.loss_sites();
        let masked = sites
            .iter()
            .filter(|&&(r, p)| b.input_ids[r * 100 + p] == MASK)
            .count();
        let frac = masked as f64 / n as f64;
        assert!((0.75..0.85).contains(&frac), "mask fraction {frac}");
    }

    #[test]
    fn static_masks_and_never_special() {
        let ids: Vec<u32> = (0..64)
            .map(|j| match j % 8 {
                0 => BOS,
                1 => EOS,
                2 => PAD,
                3 => MASK,
                4 => UNK,
                _ => 5 + j as u32,
            })
            .collect();
        let s = seq(77, ids.clone());
        let a = apply_masking(&[&s], 100, &mlm(0.9, 5)).unwrap();
        let b = apply_masking(&[&s], 100, &mlm(0.9, 5)).unwrap();
        assert_eq!(a, b);
        for &p in &a.loss_positions[0] {
            assert!(maskable(ids[p]));
            assert_eq!(a.target_ids[p], ids[p]);
        }
        let c = apply_masking(&[&s], 100, &mlm(0.9, 6)).unwrap();
        assert_ne!(a.loss_positions, c.loss_positions);
    }
}
