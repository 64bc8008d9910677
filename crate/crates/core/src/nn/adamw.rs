//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ModelParams};
use super::tensor::Tensor;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamwHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamwHyper {
    fn default() -> Self {
        AdamwHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First/second moments per parameter plus the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<S> {
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
    pub t: u64,
}

impl<S: Scalar> OptimState<S> {
    pub fn new(params: &ModelParams<S>) -> OptimState<S> {
        let zeros: Vec<Tensor<S>> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One decoupled-weight-decay update:
/// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected
/// `m^`, `v^`, then `p <- p - lr m^/(sqrt(v^)+eps) - lr wd p`.
pub fn adamw_step<S: Scalar>(
    params: &mut ModelParams<S>,
    grads: &Gradients<S>,
    state: &mut OptimState<S>,
    hyper: &AdamwHyper,
) {
    state.t += 1;
    let b1 = S::fr(hyper.beta1);
    let b2 = S::fr(hyper.beta2);
    let lr = S::fr(hyper.lr);
    let eps = S::fr(hyper.eps);
    let wd = S::fr(hyper.weight_decay);
    let corr1 = S::fr(1.0 - hyper.beta1.powi(state.t as i32));
    let corr2 = S::fr(1.0 - hyper.beta2.powi(state.t as i32));

    for (slot, (name, p)) in params.iter_mut().enumerate() {
        let Some(g) = grads.get(name) else { continue };
        assert_eq!(g.shape(), p.shape(), "gradient shape for {name:?}");
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let pd = p.data_mut();
        for i in 0..pd.len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (S::one() - b1) * gi;
            v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            pd[i] = pd[i] - lr * m_hat / (v_hat.sqrt() + eps) - lr * wd * pd[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_param(value: f64) -> ModelParams<f64> {
        let mut p = ModelParams::default();
        p.insert("p", Tensor::scalar(value));
        p
    }

    fn grad_of(value: f64) -> Gradients<f64> {
        let mut g = Gradients::default();
        g.insert("p".into(), Tensor::scalar(value));
        g
    }

    #[test]
    fn first_step_hand_value() {
        // p = 1, g = 0.5, lr = 0.1, wd = 0.01:
        // p' = 1 - 0.1 * (0.5 / (0.5 + eps)) - 0.1 * 0.01 * 1 = 0.899
        let mut params = single_param(1.0);
        let mut state = OptimState::new(&params);
        let hyper = AdamwHyper {
            lr: 0.1,
            weight_decay: 0.01,
            ..AdamwHyper::default()
        };
        adamw_step(&mut params, &grad_of(0.5), &mut state, &hyper);
        assert_abs_diff_eq!(params.get("p").unwrap().item(), 0.899, epsilon = 1e-7);
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_param() {
        let mut params = single_param(3.25);
        let mut state = OptimState::new(&params);
        let hyper = AdamwHyper {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamwHyper::default()
        };
        for _ in 0..5 {
            adamw_step(&mut params, &grad_of(0.0), &mut state, &hyper);
        }
        assert_eq!(params.get("p").unwrap().item(), 3.25);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize (p - 2)^2 from p = 0
        let mut params = single_param(0.0);
        let mut state = OptimState::new(&params);
        let hyper = AdamwHyper {
            lr: 0.05,
            weight_decay: 0.0,
            ..AdamwHyper::default()
        };
        for _ in 0..500 {
            let p = params.get("p").unwrap().item();
            adamw_step(&mut params, &grad_of(2.0 * (p - 2.0)), &mut state, &hyper);
        }
        let p = params.get("p").unwrap().item();
        assert!((p - 2.0).abs() < 0.05, "p = {p}");
    }

    #[test]
    fn zero_decay_matches_plain_adam_bitwise() {
        let mut params = single_param(1.0f64);
        let mut state = OptimState::new(&params);
        let hyper = AdamwHyper {
            lr: 0.01,
            weight_decay: 0.0,
            ..AdamwHyper::default()
        };
        // Textbook Adam: same update with the decay term absent.
        let (b1, b2) = (0.9f64, 0.999f64);
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 1.0f64);
        let g = 0.3f64;
        for t in 1..=7u32 {
            adamw_step(&mut params, &grad_of(g), &mut state, &hyper);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            p = p - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            assert_eq!(params.get("p").unwrap().item(), p, "step {t}");
        }
    }
}
