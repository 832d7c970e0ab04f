//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Serializable optimizer state, used for attack checkpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// Applies one descent step to `params` given `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]);

    fn state(&self) -> OptimizerState;

    fn restore(&mut self, state: OptimizerState);
}

/// Adaptive-moment descent with bias correction.
pub struct Adam {
    params: OptimizerParams,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(params: &OptimizerParams, n: usize) -> Self {
        Self {
            params: *params,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let p = &self.params;
        self.t += 1;
        let c1 = 1.0 - p.beta1.powi(self.t as i32);
        let c2 = 1.0 - p.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = p.beta1 * self.m[i] + (1.0 - p.beta1) * g;
            self.v[i] = p.beta2 * self.v[i] + (1.0 - p.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
        }
    }

    fn state(&self) -> OptimizerState {
        OptimizerState {
            step: self.t,
            first: self.m.clone(),
            second: self.v.clone(),
        }
    }

    fn restore(&mut self, state: OptimizerState) {
        self.t = state.step;
        self.m = state.first;
        self.v = state.second;
    }
}

/// Heavy-ball gradient descent; `beta1` is the momentum coefficient.
pub struct MomentumSgd {
    params: OptimizerParams,
    t: u64,
    velocity: Vec<f64>,
}

impl MomentumSgd {
    pub fn new(params: &OptimizerParams, n: usize) -> Self {
        Self {
            params: *params,
            t: 0,
            velocity: vec![0.0; n],
        }
    }
}

impl Optimizer for MomentumSgd {
    fn name(&self) -> &'static str {
        "momentum"
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        for i in 0..params.len() {
            self.velocity[i] = self.params.beta1 * self.velocity[i] + grad[i];
            params[i] -= self.params.learning_rate * self.velocity[i];
        }
    }

    fn state(&self) -> OptimizerState {
        OptimizerState {
            step: self.t,
            first: self.velocity.clone(),
            second: Vec::new(),
        }
    }

    fn restore(&mut self, state: OptimizerState) {
        self.t = state.step;
        self.velocity = state.first;
    }
}
