//! Adam over a flat list of parameter tensors.

use ndarray::ArrayD;

pub struct Adam {
    beta1: f32,
    beta2: f32,
    eps: f32,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
    t: i32,
}

impl Adam {
    pub fn new(beta1: f32, beta2: f32, eps: f32) -> Adam {
        Adam {
            beta1,
            beta2,
            eps,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    /// Applies one update. `grads` entries may be `None` (parameter untouched
    /// this step); moment buffers are lazily shaped on first use.
    pub fn step(&mut self, params: &mut [ArrayD<f32>], grads: &[Option<ArrayD<f32>>], lr: f32) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
            self.v = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let Some(g) = g else { continue };
            m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            ndarray::Zip::from(p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mh = m / bc1;
                    let vh = v / bc2;
                    *p -= lr * mh / (vh.sqrt() + self.eps);
                });
        }
    }
}

/// Cosine ramp-down from `initial` to 0 over `total` steps.
pub fn cosine_lr(initial: f32, step: usize, total: usize) -> f32 {
    let t = step as f32 / total.max(1) as f32;
    initial * 0.5 * (1.0 + (std::f32::consts::PI * t).cos())
}
