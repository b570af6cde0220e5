//! Finite-difference oracle for the analytic gradients, in f64.

use ki_core::corpus::{apply_masking, MaskedBatch, MaskingConfig, Objective, Sequence, Split};
use ki_core::kicore::{topk_truncate, SparseDistribution};
use ki_core::model::{
    evaluate_loss, loss_gradients, site_logits, temperature_softmax, LossSpec, Mode, ModelConfig, Params,
};

const H: f64 = 1e-4;

pub fn tiny(objective: Objective) -> ModelConfig {
    ModelConfig::shape(objective, 1, 8, 2, 16, 20, 6)
}

pub fn batch(objective: Objective) -> MaskedBatch {
    let seqs: Vec<Sequence> = (0..3u64)
        .map(|i| Sequence {
            seq_id: i,
            split: Split::Train,
            domain: "d".into(),
            ids: (0..6).map(|j| 5 + ((i as u32 * 5 + j * 3) % 15)).collect(),
        })
        .collect();
    let refs: Vec<&Sequence> = seqs.iter().collect();
    apply_masking(
        &refs,
        20,
        &MaskingConfig {
            objective,
            mask_rate: 0.5,
            seed: 3,
        },
    )
    .unwrap()
}

/// Top-5 teacher distributions at τ from an unrelated random model.
pub fn teacher(cfg: &ModelConfig, b: &MaskedBatch, tau: f64) -> Vec<SparseDistribution> {
    let t = Params::<f64>::init(cfg, 99).unwrap();
    let z = site_logits(&t, cfg, b, Mode::Eval).unwrap();
    z.chunks(cfg.vocab_size)
        .map(|row| {
            // sharpen so the teacher differs clearly from the student
            let r: Vec<f64> = row.iter().map(|x| 40.0 * x).collect();
            topk_truncate(&temperature_softmax(&r, tau).unwrap(), 5).unwrap()
        })
        .collect()
}

/// Norm-relative error between analytic and central-difference gradients,
/// per parameter tensor, on the 1-layer d=8 V=20 model.
pub fn relative_errors(objective: Objective, spec: LossSpec) -> Vec<(String, f64)> {
    let cfg = tiny(objective);
    let mut p = Params::<f64>::init(&cfg, 7).unwrap();
    // move away from the near-zero init so every gradient is well above
    // finite-difference noise
    let noise = Params::<f64>::init(&cfg, 8).unwrap();
    for (t, n) in p.tensors.iter_mut().zip(&noise.tensors) {
        for (i, x) in t.data.iter_mut().enumerate() {
            *x = 5.0 * *x + 0.1 * ((i % 5) as f64 - 2.0) + 5.0 * n.data[i];
        }
    }
    let b = batch(objective);
    let teach = teacher(&cfg, &b, spec.tau);
    let teach = (spec.alpha > 0.0).then_some(teach.as_slice());
    let (_, g) = loss_gradients(&p, &cfg, &b, &spec, teach, Mode::Eval).unwrap();
    let loss = |p: &Params<f64>| evaluate_loss(p, &cfg, &b, &spec, teach, Mode::Eval).unwrap().loss_total;
    let mut out = Vec::with_capacity(p.tensors.len());
    for ti in 0..p.tensors.len() {
        let mut num = Vec::with_capacity(p.tensors[ti].data.len());
        for j in 0..p.tensors[ti].data.len() {
            let x0 = p.tensors[ti].data[j];
            p.tensors[ti].data[j] = x0 + H;
            let lp = loss(&p);
            p.tensors[ti].data[j] = x0 - H;
            let lm = loss(&p);
            p.tensors[ti].data[j] = x0;
            num.push((lp - lm) / (2.0 * H));
        }
        let ana = &g.tensors[ti].data;
        let diff: f64 = ana.iter().zip(&num).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = ana.iter().map(|a| a * a).sum::<f64>().sqrt().max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
        // key biases shift every score of a row equally, so their exact gradient is 0
        let rel = if scale < 1e-10 { 0.0 } else { diff / scale };
        out.push((p.tensors[ti].name.clone(), rel));
    }
    out
}
