use crate::model::{Gradients, ParamLayout};

/// Adam with decoupled weight decay, applied to embeddings and weight matrices only.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(layout: &ParamLayout, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let mut decay = vec![false; layout.total()];
        for s in layout.specs() {
            if s.is_matrix() {
                decay[s.range()].fill(true);
            }
        }
        let n = layout.total();
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            decay,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f32], grads: &Gradients<f32>, lr: f64) {
        assert_eq!(
            params.len(),
            grads.len(),
            "parameter and gradient sizes differ"
        );
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let eps = self.eps as f32;
        let shrink = (1.0 - lr * self.weight_decay) as f32;
        for i in 0..params.len() {
            let g = grads.data[i];
            let m = b1 * self.m[i] + (1.0 - b1) * g;
            let v = b2 * self.v[i] + (1.0 - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            if self.decay[i] {
                params[i] *= shrink;
            }
            params[i] -= step * m / ((v * inv_bc2).sqrt() + eps);
        }
    }
}
