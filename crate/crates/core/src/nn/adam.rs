use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], c1: f64, c2: f64, lr: f64, cfg: &AdamConfig) {
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

fn corrections(state: &mut AdamState, cfg: &AdamConfig) -> (f64, f64) {
    state.t += 1;
    let t = state.t as i32;
    (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t))
}

/// One bias-corrected ADAM update over flat parameter and gradient slices.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Dimension {
            expected: params.len(),
            actual: grads.len().min(state.m.len()).min(state.v.len()),
        });
    }
    let (c1, c2) = corrections(state, cfg);
    update(params, grads, &mut state.m, &mut state.v, c1, c2, learning_rate, cfg);
    Ok(())
}

/// ADAM optimizer bound to one model's parameter layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
    pub learning_rate: f64,
}

impl Adam {
    pub fn new(model: &Mlp, learning_rate: f64, config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::new(model.parameter_count()),
            learning_rate,
        }
    }

    /// Updates the model in place; the parameter order matches
    /// [`Mlp::parameters`].
    pub fn step(&mut self, model: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != model.layers.len() || self.state.m.len() != model.parameter_count() {
            return Err(Error::Dimension {
                expected: model.parameter_count(),
                actual: self.state.m.len(),
            });
        }
        let (c1, c2) = corrections(&mut self.state, &self.config);
        let mut offset = 0;
        for (layer, grad) in model.layers.iter_mut().zip(&grads.layers) {
            let pairs = [
                (layer.weights.as_slice_mut(), grad.weights.as_slice()),
                (layer.bias.as_slice_mut(), grad.bias.as_slice()),
            ];
            for (p, g) in pairs {
                let (p, g) = (p.expect("standard layout"), g.expect("standard layout"));
                if p.len() != g.len() {
                    return Err(Error::Dimension { expected: p.len(), actual: g.len() });
                }
                let end = offset + p.len();
                update(
                    p,
                    g,
                    &mut self.state.m[offset..end],
                    &mut self.state.v[offset..end],
                    c1,
                    c2,
                    self.learning_rate,
                    &self.config,
                );
                offset = end;
            }
        }
        Ok(())
    }
}
