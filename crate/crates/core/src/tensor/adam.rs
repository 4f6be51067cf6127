use super::{Real, Tensor};
use crate::error::{Error, Result};

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub adam_m: Tensor<T>,
    pub adam_v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            grad: Tensor::zeros(shape.clone()),
            adam_m: Tensor::zeros(shape.clone()),
            adam_v: Tensor::zeros(shape),
            value,
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Adds `g` into the accumulated gradient.
    pub fn accumulate(&mut self, g: &Tensor<T>) -> Result<()> {
        self.grad.add_assign(g)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` from its accumulated gradient.
pub fn adam_step<T: Real>(param: &mut Parameter<T>, cfg: &AdamConfig) -> Result<()> {
    if !param.grad.all_finite() {
        return Err(Error::NonFiniteGradient {
            name: param.name.clone(),
        });
    }
    param.step_count += 1;
    let t = param.step_count as i32;
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (c1, c2) = (
        T::from_f64_lossy(1.0 - cfg.beta1.powi(t)),
        T::from_f64_lossy(1.0 - cfg.beta2.powi(t)),
    );
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.epsilon);
    let one = T::one();
    let Parameter { value, grad, adam_m, adam_v, .. } = param;
    for (((x, &g), m), v) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(adam_m.data_mut())
        .zip(adam_v.data_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64, g: f64) -> Parameter<f64> {
        let mut p = Parameter::new("p", Tensor::full([1], v));
        p.grad = Tensor::full([1], g);
        p
    }

    #[test]
    fn zero_gradient_leaves_value_and_decays_moments() {
        let mut p = scalar(0.7, 0.0);
        p.adam_m = Tensor::full([1], 0.5);
        p.adam_v = Tensor::full([1], 0.25);
        adam_step(&mut p, &AdamConfig::default()).unwrap();
        assert_eq!(p.adam_m.data()[0], 0.45);
        assert!((p.adam_v.data()[0] - 0.24975).abs() < 1e-15);
        // A non-zero first moment still moves the value; with no history it must not.
        let mut q = scalar(0.7, 0.0);
        adam_step(&mut q, &AdamConfig::default()).unwrap();
        assert_eq!(q.value.data()[0], 0.7);
        assert_eq!(q.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = v̂ = 1 after bias correction, so Δ = −lr·1/(1+ε).
        let mut p = scalar(0.0, 1.0);
        adam_step(&mut p, &AdamConfig::default()).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15, "{}", p.value.data()[0]);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = scalar(0.3, -2.0);
        let mut b = scalar(0.3, -2.0);
        for _ in 0..5 {
            adam_step(&mut a, &AdamConfig::default()).unwrap();
            adam_step(&mut b, &AdamConfig::default()).unwrap();
        }
        assert_eq!(a.value.data()[0].to_bits(), b.value.data()[0].to_bits());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(0.0, f64::NAN);
        p.name = "encoder.0.weight".into();
        match adam_step(&mut p, &AdamConfig::default()) {
            Err(Error::NonFiniteGradient { name }) => assert_eq!(name, "encoder.0.weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.step_count, 0);
    }

    #[test]
    fn zero_grad_clears() {
        let mut p = scalar(1.0, 3.0);
        p.zero_grad();
        assert_eq!(p.grad.data(), &[0.0]);
    }
}
