//! Adam optimizer with bias correction. Moment accumulators are kept in
//! double precision regardless of parameter storage.

use super::tensor::{elem, Element, Tensor};
use super::AutogradError;

/// Per-parameter optimizer state and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// State with the training hyperparameters used throughout: lr 1e-4,
    /// beta1 0.9, beta2 0.999, epsilon 1e-8.
    pub fn new() -> Self {
        Self::with_lr(1e-4)
    }

    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

/// One bias-corrected Adam update over a parameter list. Moments are lazily
/// initialized to zeros on the first call; afterwards parameter shapes must
/// stay consistent. Non-finite gradients abort with an error before any
/// parameter is touched.
pub fn adam_step<T: Element>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState,
) -> Result<(), AutogradError> {
    if params.len() != grads.len() {
        return Err(AutogradError::InvalidArgument(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(AutogradError::ShapeMismatch(format!(
                "parameter {i}: {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if g.data().iter().any(|v| !v.is_finite()) {
            return Err(AutogradError::NonFinite(format!(
                "gradient for parameter {i} is not finite"
            )));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.data().len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state
            .m
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.data().len())
    {
        return Err(AutogradError::ShapeMismatch(
            "optimizer state does not match parameter list".into(),
        ));
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for ((pv, &gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            let gf = gv.to_f64().unwrap();
            *mv = state.beta1 * *mv + (1.0 - state.beta1) * gf;
            *vv = state.beta2 * *vv + (1.0 - state.beta2) * gf * gf;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            let update = state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
            *pv = *pv - elem::<T>(update);
        }
    }
    Ok(())
}
