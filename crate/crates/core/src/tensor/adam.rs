use super::{Matrix, ParamStore, TensorError};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, store: &ParamStore) -> Self {
        let zeros = |p: &super::Parameter| Matrix::zeros(p.value.rows(), p.value.cols());
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TensorError> {
        if store.len() != self.m.len() {
            return Err(TensorError::shape("adam_step", (store.len(), 1), (self.m.len(), 1)));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.value.shape() != m.shape() {
                return Err(TensorError::shape("adam_step", p.value.shape(), m.shape()));
            }
            let values = p.value.data_mut();
            let grads = p.grad.data_mut();
            for (((w, g), mi), vi) in values
                .iter_mut()
                .zip(grads.iter_mut())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * *g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_with_unit_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::scalar(1.0));
        store.accumulate_grad(id, &Matrix::scalar(1.0)).unwrap();
        let mut adam = Adam::new(0.01, &store);
        adam.step(&mut store).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + eps).
        let expected = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((store.value(id).data()[0] - expected).abs() < 1e-15);
        assert!((1.0 - store.value(id).data()[0] - 0.009_999_999_9).abs() < 1e-12);
        assert_eq!(store.grad(id).data(), &[0.0]);
    }

    #[test]
    fn zero_gradient_leaves_value_but_counts_step() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(2, 2, 0.5));
        let mut adam = Adam::new(0.01, &store);
        adam.step(&mut store).unwrap();
        assert_eq!(store.value(id).data(), &[0.5; 4]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn mismatched_store_rejected() {
        let mut store = ParamStore::new();
        store.add("w", Matrix::scalar(1.0));
        let mut adam = Adam::new(0.01, &store);
        store.add("extra", Matrix::scalar(1.0));
        assert!(adam.step(&mut store).is_err());
    }
}
