//! SGD with momentum, Adam, and the polynomial learning-rate schedule.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Grads, ParamSet};
use crate::scalar::Scalar;

pub trait Optimizer<T: Scalar> {
    /// Applies one update with learning rate `base_lr · lr_multiplier`.
    fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>, lr_multiplier: f64) -> Result<()>;
}

fn check_grads<T: Scalar>(params: &ParamSet<T>, grads: &Grads<T>) -> Result<()> {
    for (name, p) in params.iter() {
        match grads.get(name) {
            None => return Err(Error::Usage(format!("no gradient for parameter {name}"))),
            Some(g) if g.len() != p.len() => {
                return Err(Error::Shape(format!(
                    "gradient for {name} has {} values, parameter has {}",
                    g.len(),
                    p.len()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    /// L2 coefficient added to the gradient; off by default.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.007,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

/// `v ← m·v + g`, `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T> {
    pub config: SgdConfig,
    velocity: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(config: SgdConfig) -> Self {
        Self {
            config,
            velocity: BTreeMap::new(),
        }
    }

    pub fn velocity(&self, name: &str) -> Option<&[T]> {
        self.velocity.get(name).map(Vec::as_slice)
    }
}

impl<T: Scalar> Optimizer<T> for SgdMomentum<T> {
    fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>, lr_multiplier: f64) -> Result<()> {
        check_grads(params, grads)?;
        let m = T::lit(self.config.momentum);
        let wd = T::lit(self.config.weight_decay);
        let lr = T::lit(self.config.base_lr * lr_multiplier);
        for (name, p) in params.iter_mut() {
            let g = &grads[name];
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![T::zero(); g.len()]);
            for ((pi, vi), &gi) in p.data_mut().iter_mut().zip(v.iter_mut()).zip(g) {
                *vi = m * *vi + gi + wd * *pi;
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam with a step counter shared by all parameters.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: BTreeMap<String, Vec<T>>,
    second: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>, lr_multiplier: f64) -> Result<()> {
        check_grads(params, grads)?;
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - c.beta1), T::lit(1.0 - c.beta2));
        let step_size = T::lit(c.base_lr * lr_multiplier / bc1);
        let sqrt_bc2 = T::lit(bc2.sqrt());
        let eps = T::lit(c.epsilon);
        for (name, p) in params.iter_mut() {
            let g = &grads[name];
            let m = self.first.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self.second.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            for (((pi, mi), vi), &gi) in p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *mi = b1 * *mi + one_b1 * gi;
                *vi = b2 * *vi + one_b2 * gi * gi;
                *pi -= step_size * *mi / (vi.sqrt() / sqrt_bc2 + eps);
            }
        }
        Ok(())
    }
}

/// Learning-rate multiplier `(1 − i/total)^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySchedule {
    pub total_iterations: usize,
    pub power: f64,
}

impl Default for PolySchedule {
    fn default() -> Self {
        Self {
            total_iterations: 3750,
            power: 0.9,
        }
    }
}

impl PolySchedule {
    /// Iterations past the horizon clamp to 0.
    pub fn multiplier(&self, i: usize) -> f64 {
        if self.total_iterations == 0 || i >= self.total_iterations {
            return 0.0;
        }
        (1.0 - i as f64 / self.total_iterations as f64).powf(self.power)
    }
}

pub fn poly_multiplier(i: usize, schedule: &PolySchedule) -> f64 {
    schedule.multiplier(i)
}
