//! First-order update rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    RmsProp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Division guard `ε̂`.
    pub epsilon: f64,
    /// Decay of the RMSProp squared-gradient average.
    pub rms_decay: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { learning_rate: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, rms_decay: 0.9 }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain { name, value: v, domain: "[0, 1)" })
            }
        };
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        unit("rms_decay", self.rms_decay)?;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain { name: "learning_rate", value: self.learning_rate, domain: "(0, ∞)" });
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Domain { name: "epsilon", value: self.epsilon, domain: "[0, ∞)" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub hyper: Hyperparams,
    /// Completed steps.
    pub t: u64,
    /// First moment (Adam only).
    pub m: Vec<f64>,
    /// Second moment (Adam, RMSProp).
    pub v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, hyper: Hyperparams, num_params: usize) -> Self {
        Self { kind, hyper, t: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    /// In-place update of `params` with gradient `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if grad.len() != params.len() {
            return Err(Error::Shape { expected: params.len(), got: grad.len() });
        }
        if self.m.len() != params.len() {
            return Err(Error::Shape { expected: self.m.len(), got: params.len() });
        }
        let h = self.hyper;
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= h.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as i32;
                let step = h.learning_rate * (1.0 - h.beta2.powi(t)).sqrt() / (1.0 - h.beta1.powi(t));
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = h.beta1 * self.m[i] + (1.0 - h.beta1) * g;
                    self.v[i] = h.beta2 * self.v[i] + (1.0 - h.beta2) * g * g;
                    params[i] -= step * self.m[i] / (self.v[i].sqrt() + h.epsilon);
                }
            }
            OptimizerKind::RmsProp => {
                for i in 0..params.len() {
                    let g = grad[i];
                    self.v[i] = h.rms_decay * self.v[i] + (1.0 - h.rms_decay) * g * g;
                    params[i] -= h.learning_rate * g / (self.v[i].sqrt() + h.epsilon);
                }
            }
        }
        Ok(())
    }
}

/// Value-returning form of [`OptimizerState::step`].
pub fn optimizer_step(state: &OptimizerState, params: &[f64], grad: &[f64]) -> Result<(Vec<f64>, OptimizerState)> {
    let mut next = state.clone();
    let mut p = params.to_vec();
    next.step(&mut p, grad)?;
    Ok((p, next))
}
