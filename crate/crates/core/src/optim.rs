//! First-order optimizer state and the adaptation weight schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Phase weights for the two adaptation terms.
///
/// Over `T` iterations: the uniform-density weight is `m` during the first
/// quarter, the curvature-adaptive weight is `2m` during the second quarter,
/// and both are zero for the second half. Intervals are half-open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub strength: f64,
    pub iterations: usize,
}

impl ScheduleConfig {
    pub fn new(strength: f64, iterations: usize) -> Result<Self> {
        if !(strength.is_finite() && strength >= 0.0) {
            return Err(Error::Config(format!("adaptation strength must be >= 0, got {strength}")));
        }
        if iterations < 4 {
            return Err(Error::Config(format!("need at least 4 iterations, got {iterations}")));
        }
        Ok(Self { strength, iterations })
    }

    /// `(w_u, w_k)` at iteration `t`.
    pub fn weights(&self, t: usize) -> (f64, f64) {
        // t/T < 1/4 and 1/4 <= t/T < 1/2, in exact integer arithmetic.
        let t4 = 4 * t;
        let w_u = if t4 < self.iterations { self.strength } else { 0.0 };
        let w_k = if t4 >= self.iterations && 2 * t < self.iterations {
            2.0 * self.strength
        } else {
            0.0
        };
        (w_u, w_k)
    }
}

/// How the second-moment denominator is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondMoment {
    /// One scalar shared by all coordinates, fed by the squared largest
    /// gradient entry.
    #[default]
    Uniform,
    /// Standard per-coordinate Adam.
    PerCoordinate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub second_moment: SecondMoment,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            second_moment: SecondMoment::Uniform,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub u: Vec<Vec3>,
    pub m1: Vec<Vec3>,
    pub m2_scalar: f64,
    /// Only used in [`SecondMoment::PerCoordinate`] mode.
    pub m2: Vec<Vec3>,
    pub t: usize,
    pub config: StepConfig,
}

impl OptimizerState {
    pub fn new(u: Vec<Vec3>, config: StepConfig) -> Self {
        let n = u.len();
        let m2 = match config.second_moment {
            SecondMoment::Uniform => Vec::new(),
            SecondMoment::PerCoordinate => vec![Vec3::zeros(); n],
        };
        Self {
            u,
            m1: vec![Vec3::zeros(); n],
            m2_scalar: 0.0,
            m2,
            t: 0,
            config,
        }
    }

    /// One bias-corrected moment update of `u` against `grad`.
    pub fn step(&mut self, grad: &[Vec3]) -> Result<()> {
        crate::error::check_len(self.u.len(), grad.len())?;
        if let Some(i) = grad.iter().position(|g| !g.iter().all(|c| c.is_finite())) {
            return Err(Error::Numerical {
                iteration: self.t,
                message: format!("non-finite gradient at vertex {i}: {:?}", grad[i]),
            });
        }
        let StepConfig {
            step_size,
            beta1,
            beta2,
            epsilon,
            second_moment,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (m, g) in self.m1.iter_mut().zip(grad) {
            *m = *m * beta1 + g * (1.0 - beta1);
        }
        match second_moment {
            SecondMoment::Uniform => {
                let gmax = grad.iter().map(|g| g.amax()).fold(0.0, f64::max);
                self.m2_scalar = beta2 * self.m2_scalar + (1.0 - beta2) * gmax * gmax;
                let denom = (self.m2_scalar / bc2).sqrt() + epsilon;
                let scale = step_size / (bc1 * denom);
                for (u, m) in self.u.iter_mut().zip(&self.m1) {
                    *u -= m * scale;
                }
            }
            SecondMoment::PerCoordinate => {
                for ((u, m), (v, g)) in self.u.iter_mut().zip(&self.m1).zip(self.m2.iter_mut().zip(grad)) {
                    *v = *v * beta2 + g.component_mul(g) * (1.0 - beta2);
                    for k in 0..3 {
                        let denom = (v[k] / bc2).sqrt() + epsilon;
                        u[k] -= step_size * (m[k] / bc1) / denom;
                    }
                }
            }
        }
        Ok(())
    }
}
