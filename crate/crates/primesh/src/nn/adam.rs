use ndarray::{ArrayD, NdFloat};

use crate::nn::QNetwork;

/// Adam with bias correction. Moment buffers align with the network's fixed
/// parameter visit order.
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update from the gradients currently accumulated in the
    /// network. Gradients are left untouched; loss entry points reset them.
    pub fn step(&mut self, net: &mut QNetwork<F>) {
        self.t += 1;
        let b1 = F::from(self.beta1).unwrap();
        let b2 = F::from(self.beta2).unwrap();
        let one = F::one();
        let corr1 = F::from(1.0 - self.beta1.powi(self.t)).unwrap();
        let corr2 = F::from(1.0 - self.beta2.powi(self.t)).unwrap();
        let lr = F::from(self.lr).unwrap();
        let eps = F::from(self.eps).unwrap();
        let (m, v) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        net.visit_params_mut(&mut |_, mut p, g| {
            if m.len() == idx {
                m.push(ArrayD::zeros(g.raw_dim()));
                v.push(ArrayD::zeros(g.raw_dim()));
            }
            let mi = &mut m[idx];
            let vi = &mut v[idx];
            ndarray::Zip::from(&mut *mi).and(&g).for_each(|m, &g| *m = b1 * *m + (one - b1) * g);
            ndarray::Zip::from(&mut *vi).and(&g).for_each(|v, &g| *v = b2 * *v + (one - b2) * g * g);
            ndarray::Zip::from(&mut p).and(&*mi).and(&*vi).for_each(|p, &m, &v| {
                let mhat = m / corr1;
                let vhat = v / corr2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            });
            idx += 1;
        });
    }
}
