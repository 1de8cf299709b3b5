use crate::array::ParamStore;

/// Plain gradient descent: `p ← p − lr·g`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }

    pub fn step(&self, store: &mut ParamStore) {
        for (_, arr) in store.iter_mut() {
            let Some(g) = arr.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            for (p, gi) in arr.data_mut().iter_mut().zip(&g) {
                *p -= self.lr * gi;
            }
        }
    }
}

/// Adam with bias correction. Moment buffers follow store order.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Updates every parameter whose name passes `trainable`.
    pub fn step_filtered(&mut self, store: &mut ParamStore, trainable: impl Fn(&str) -> bool) {
        if self.m.len() != store.len() {
            self.m = store.iter().map(|(_, a)| vec![0.0; a.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (i, (name, arr)) in store.iter_mut().enumerate() {
            if !trainable(name) {
                continue;
            }
            let Some(g) = arr.grad().map(<[f64]>::to_vec) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in arr.data_mut().iter_mut().enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                *p -= self.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + self.eps);
            }
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.step_filtered(store, |_| true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;

    #[test]
    fn sgd_with_zero_gradient_leaves_values_untouched() {
        let mut s = ParamStore::new(0);
        s.insert("x", Array::from_vec(vec![0.1, -0.3]).unwrap()).unwrap();
        s.zero_grads();
        let before = s.clone();
        Sgd::new(0.5).step(&mut s);
        assert_eq!(before.get("x").unwrap().data(), s.get("x").unwrap().data());
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut s = ParamStore::new(0);
        s.insert("x", Array::from_vec(vec![3.0]).unwrap()).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..300 {
            s.zero_grads();
            let x = s.get("x").unwrap().data()[0];
            s.get_mut("x").unwrap().grad_mut()[0] = 2.0 * x;
            opt.step(&mut s);
        }
        assert!(s.get("x").unwrap().data()[0].abs() < 0.05);
    }
}
