use serde::{Deserialize, Serialize};

use super::tensor::{ParamSet, Real, Tensor};
use super::NumError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Factor applied to the learning rate by [`AdamState::decay`].
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.9,
        }
    }
}

/// Moment estimates for every tensor of a [`ParamSet`], in its order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub lr: f64,
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<P: ParamSet<T>>(params: &P, config: AdamConfig) -> Self {
        let zeros = || params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            config,
            lr: config.lr,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn decay(&mut self) {
        self.lr *= self.config.lr_decay;
    }
}

/// One bias-corrected Adam update. Gradients are checked for NaN/Inf before
/// any parameter is touched.
pub fn adam_step<T: Real, P: ParamSet<T>>(params: &mut P, grads: &P, state: &mut AdamState<T>) -> Result<(), NumError> {
    let names = grads.names();
    let gs = grads.tensors();
    for (g, name) in gs.iter().zip(&names) {
        if g.check_finite(name).is_err() {
            return Err(NumError::NonFiniteGradient(name.clone()));
        }
    }
    let ps = params.tensors_mut();
    if ps.len() != gs.len() || ps.len() != state.m.len() {
        return Err(NumError::ShapeMismatch("parameter and gradient sets differ".into()));
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let step = state.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (nb1, nb2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
    let (step, eps) = (T::of(step), T::of(c.eps * (1.0 - c.beta2.powi(t)).sqrt()));
    for (((p, g), m), v) in ps.into_iter().zip(gs).zip(&mut state.m).zip(&mut state.v) {
        if p.shape() != g.shape() {
            return Err(NumError::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + nb1 * gi;
            *vi = b2 * *vi + nb2 * gi * gi;
            *pi -= step * *mi / (vi.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_learning_rate() {
        assert_eq!(AdamConfig::default().lr, 0.0002);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Tensor::<f64>::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = p.clone();
        let g = Tensor::<f64>::zeros(&[3]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut st).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn scalar_first_step_by_hand() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let g0 = 0.37f64;
        let mut p = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        let g = Tensor::from_vec(&[1], vec![g0]).unwrap();
        let mut st = AdamState::new(&p, cfg);
        adam_step(&mut p, &g, &mut st).unwrap();
        let m_hat = (0.1 * g0) / (1.0 - 0.9);
        let v_hat = (0.001 * g0 * g0) / (1.0 - 0.999);
        let expected = 2.0 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-12);
        // second step with the same gradient
        adam_step(&mut p, &g, &mut st).unwrap();
        let m2 = 0.9 * 0.1 * g0 + 0.1 * g0;
        let v2 = 0.999 * 0.001 * g0 * g0 + 0.001 * g0 * g0;
        let expected2 = expected - 0.01 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p.data()[0] - expected2).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected_before_update() {
        let mut p = Tensor::<f64>::from_vec(&[2], vec![1.0, 1.0]).unwrap();
        let mut g = Tensor::<f64>::zeros(&[2]);
        g.data_mut()[1] = f64::NAN;
        let mut st = AdamState::new(&p, AdamConfig::default());
        assert!(matches!(adam_step(&mut p, &g, &mut st), Err(NumError::NonFiniteGradient(_))));
        assert_eq!(p.data(), &[1.0, 1.0]);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn decay_multiplies_lr() {
        let p = Tensor::<f32>::zeros(&[1]);
        let mut st = AdamState::new(&p, AdamConfig::default());
        st.decay();
        assert!((st.lr - 0.00018).abs() < 1e-12);
    }
}
