use std::cmp::Ordering;

use crate::error::{KiError, Result};

const SUM_TOL: f64 = 1e-6;

/// A truncated distribution over token ids, sorted by descending probability
/// then ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistribution {
    entries: Vec<(u32, f64)>,
}

fn entry_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

impl SparseDistribution {
    /// Validates and canonicalises `entries` (sorting is applied here).
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(KiError::NumericFailure("empty sparse distribution".into()));
        }
        if entries.iter().any(|&(_, p)| !(p > 0.0) || !p.is_finite()) {
            return Err(KiError::NumericFailure(
                "sparse distribution has a non-positive probability".into(),
            ));
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(KiError::NumericFailure(format!(
                "sparse distribution sums to {sum}"
            )));
        }
        entries.sort_by(entry_order);
        let mut ids: Vec<u32> = entries.iter().map(|e| e.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(KiError::NumericFailure("duplicate token id in distribution".into()));
        }
        Ok(SparseDistribution { entries })
    }

    /// Divides every probability by the total mass, then validates.
    pub fn normalized(entries: Vec<(u32, f64)>) -> Result<Self> {
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(KiError::NumericFailure("distribution has no mass".into()));
        }
        Self::new(entries.into_iter().map(|(k, p)| (k, p / sum)).collect())
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prob(&self, id: u32) -> f64 {
        self.entries.iter().find(|e| e.0 == id).map_or(0.0, |e| e.1)
    }

    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        match self.entries.iter().find(|e| e.0 as usize >= vocab_size) {
            Some(&(id, _)) => Err(KiError::VocabMismatch(format!(
                "token id {id} outside vocabulary of {vocab_size}"
            ))),
            None => Ok(()),
        }
    }

    /// Dense vector over `vocab_size` with zeros off the support.
    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        let mut out = vec![0.0; vocab_size];
        for &(k, p) in &self.entries {
            out[k as usize] = p;
        }
        out
    }
}

/// Keeps the `k` most probable entries (ties by ascending id) and renormalizes.
/// Zero-probability entries are never kept.
pub fn topk_truncate(probs: &[f64], k: usize) -> Result<SparseDistribution> {
    if k < 1 {
        return Err(KiError::InvalidK(k));
    }
    let mut idx: Vec<(u32, f64)> = probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| (i as u32, p))
        .collect();
    if idx.len() > k {
        idx.select_nth_unstable_by(k - 1, entry_order);
        idx.truncate(k);
    }
    SparseDistribution::normalized(idx)
}

/// `Σ_k p_k ln(p_k / q_k)` with `0·ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(KiError::VocabMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (k, (&pk, &qk)) in p.iter().zip(q).enumerate() {
        if pk > 0.0 {
            if !(qk > 0.0) {
                return Err(KiError::SupportMismatch(k as u32));
            }
            kl += pk * (pk / qk).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// KL from a sparse `p` to `q` renormalised over `p`'s support.
pub fn kl_divergence_sparse(p: &SparseDistribution, q: &[f64]) -> Result<f64> {
    let mut mass = 0.0;
    for &(k, _) in p.entries() {
        let qk = *q.get(k as usize).ok_or(KiError::SupportMismatch(k))?;
        if !(qk > 0.0) {
            return Err(KiError::SupportMismatch(k));
        }
        mass += qk;
    }
    let mut kl = 0.0;
    for &(k, pk) in p.entries() {
        kl += pk * (pk * mass / q[k as usize]).ln();
    }
    Ok(kl.max(0.0))
}
