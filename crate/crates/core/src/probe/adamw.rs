use super::{Gradients, ProbeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First and second moment estimates for `W` and `b`, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m_weights: Vec<f32>,
    pub v_weights: Vec<f32>,
    pub m_bias: Vec<f32>,
    pub v_bias: Vec<f32>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &ProbeModel) -> Self {
        let (w, b) = (model.weights().len(), model.bias().len());
        Self {
            m_weights: vec![0.0; w],
            v_weights: vec![0.0; w],
            m_bias: vec![0.0; b],
            v_bias: vec![0.0; b],
            step: 0,
        }
    }
}

/// One AdamW update of a flat parameter slice with decoupled weight decay.
/// `step` is the 1-based step number used for bias correction.
pub fn adamw_update(params: &mut [f32], grads: &[f32], m: &mut [f32], v: &mut [f32], step: u64, cfg: &AdamWConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i] as f64;
        let mi = cfg.beta1 * m[i] as f64 + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i] as f64 + (1.0 - cfg.beta2) * g * g;
        m[i] = mi as f32;
        v[i] = vi as f32;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        let theta = params[i] as f64;
        params[i] = (theta - cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * theta)) as f32;
    }
}

pub fn adamw_step(
    model: &mut ProbeModel,
    state: &mut OptimizerState,
    grads: &Gradients,
    cfg: &AdamWConfig,
) -> Result<()> {
    if grads.weights.len() != model.weights().len() || grads.bias.len() != model.bias().len() {
        return Err(Error::Shape("gradient shapes do not match the model".into()));
    }
    if state.m_weights.len() != grads.weights.len() || state.m_bias.len() != grads.bias.len() {
        return Err(Error::Shape("optimizer state does not match the model".into()));
    }
    state.step += 1;
    let step = state.step;
    let (w, b) = model.params_mut();
    adamw_update(w, &grads.weights, &mut state.m_weights, &mut state.v_weights, step, cfg);
    adamw_update(b, &grads.bias, &mut state.m_bias, &mut state.v_bias, step, cfg);
    Ok(())
}
