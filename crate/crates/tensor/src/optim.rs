use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads[i]` belongs to the i-th tensor of `params`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Tensor<T>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let c1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::from_f64_lossy(self.lr);
        let eps = T::from_f64_lossy(self.eps);
        let one = T::one();
        for (i, g) in grads.iter().enumerate() {
            let p = params.tensor_mut(i);
            assert_eq!(p.shape(), g.shape());
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
