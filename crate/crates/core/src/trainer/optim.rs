use crate::model::{Params, TensorKind};

/// Adam with decoupled weight decay on weight matrices and embeddings only.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    steps: u64,
}

impl AdamW {
    pub fn new(params: &Params<f32>, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || params.tensors.iter().map(|t| vec![0.0f32; t.data.len()]).collect();
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: zeros(),
            v: zeros(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params<f32>, grads: &Params<f32>, lr: f64) {
        self.steps += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 / (1.0 - self.beta1.powi(self.steps as i32)) as f32;
        let c2 = 1.0 / (1.0 - self.beta2.powi(self.steps as i32)) as f32;
        let (lr32, eps, wd) = (lr as f32, self.eps as f32, self.weight_decay as f32);
        for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
            let decay = if p.kind == TensorKind::Weight { lr32 * wd } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m[j] = b1 * m[j] + (1.0 - b1) * gj;
                v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
                let update = (m[j] * c1) / ((v[j] * c2).sqrt() + eps);
                p.data[j] -= lr32 * update + decay * p.data[j];
            }
        }
    }
}
