use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Optimizer state for parameters of the given shapes, with
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, lr: T) -> Self {
        Self::with_betas(params, lr, T::cast(0.9), T::cast(0.999), T::cast(1e-8))
    }

    pub fn with_betas<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, lr: T, beta1: T, beta2: T, eps: T) -> Self {
        let first: Vec<_> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    pub fn lr(&self) -> T {
        self.lr
    }

    pub fn set_lr(&mut self, lr: T) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.second
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(
                "adam_step",
                self.first.len(),
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first[i].shape() || g.shape() != self.first[i].shape() {
                return Err(Error::dim(
                    "adam_step",
                    format!("{:?}", self.first[i].shape()),
                    format!("param {:?}, grad {:?}", p.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let one = T::one();
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for j in 0..pd.len() {
                let gj = g.data()[j];
                md[j] = b1 * md[j] + (one - b1) * gj;
                vd[j] = b2 * vd[j] + (one - b2) * gj * gj;
                let mhat = md[j] / c1;
                let vhat = vd[j] / c2;
                pd[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Tensor::vector(vec![1.5, -2.0]);
        let mut adam = Adam::new([&p], 1e-3);
        adam.step(&mut [&mut p], &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = Tensor::vector(vec![0.0]);
        let mut adam = Adam::new([&p], 1e-2);
        adam.step(&mut [&mut p], &[Tensor::vector(vec![1.0])]).unwrap();
        let expected: f64 = -1e-2 * 1.0 / (1.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        adam.step(&mut [&mut p], &[Tensor::vector(vec![1.0])]).unwrap();
        assert!((p.data()[0] - 2.0 * expected).abs() < 1e-12);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn moments_decay_after_gradients_stop() {
        let mut p = Tensor::vector(vec![0.0]);
        let mut adam = Adam::new([&p], 1e-3);
        adam.step(&mut [&mut p], &[Tensor::vector(vec![2.0])]).unwrap();
        let (m0, v0) = (adam.first_moments()[0].data()[0], adam.second_moments()[0].data()[0]);
        for _ in 0..50 {
            adam.step(&mut [&mut p], &[Tensor::vector(vec![0.0])]).unwrap();
        }
        let (m1, v1) = (adam.first_moments()[0].data()[0], adam.second_moments()[0].data()[0]);
        assert!(m1 < m0 * 0.01 && m1 > 0.0);
        assert!(v1 < v0 && v1 > 0.0);
    }

    #[test]
    fn one_step_decreases_a_convex_quadratic() {
        // loss(w) = (w - 3)^2
        let mut w = Tensor::vector(vec![0.0]);
        let mut adam = Adam::new([&w], 1e-2);
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let before = loss(w.data()[0]);
        let g = 2.0 * (w.data()[0] - 3.0);
        adam.step(&mut [&mut w], &[Tensor::vector(vec![g])]).unwrap();
        assert!(loss(w.data()[0]) < before);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::vector(vec![0.0, 1.0]);
        let mut adam = Adam::new([&p], 1e-3);
        assert!(adam.step(&mut [&mut p], &[Tensor::vector(vec![0.0])]).is_err());
        assert_eq!(adam.step_count(), 0);
    }
}
