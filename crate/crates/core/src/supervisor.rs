//! Hysteresis switch between the original input and the safety controller.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rk4_step;
use crate::model::Controller;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Original,
    Safety,
}

impl Mode {
    /// Numeric code used in traces (0 = original, 1 = safety).
    pub fn code(self) -> u8 {
        match self {
            Mode::Original => 0,
            Mode::Safety => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    pub eps_low: f64,
    pub eps_high: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            eps_low: 0.7,
            eps_high: 0.9,
        }
    }
}

impl SupervisorConfig {
    /// Requires `ε < ε̲ < ε̄ ≤ 1`.
    pub fn validate(&self, epsilon: f64) -> Result<()> {
        if epsilon < self.eps_low && self.eps_low < self.eps_high && self.eps_high <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "thresholds must satisfy epsilon ({epsilon}) < eps_low ({}) < eps_high ({}) <= 1",
                self.eps_low, self.eps_high
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisorState {
    pub mode: Mode,
    pub x_k: DVector<f64>,
    pub last_b_bar: f64,
}

impl SupervisorState {
    pub fn new(n: usize) -> Self {
        Self {
            mode: Mode::Original,
            x_k: DVector::zeros(n),
            last_b_bar: 0.0,
        }
    }
}

/// `ẋ_k = A_k x_k + b_k y` over one RK4 step with `y` held; returns the new
/// state and the pre-step output `u = c_k x_k`.
pub fn controller_step(
    x_k: &DVector<f64>,
    y: f64,
    ctrl: &Controller,
    dt: f64,
) -> (DVector<f64>, f64) {
    let u = ctrl.c_k.dot(&x_k.transpose());
    let next = rk4_step(x_k.as_slice(), dt, |_, x, out| {
        let x = DVector::from_column_slice(x);
        let dx = &ctrl.a_k * x + &ctrl.b_k * y;
        out.copy_from_slice(dx.as_slice());
    });
    (DVector::from_vec(next), u)
}

/// Original → Safety iff `B̄ ≥ ε̄`; Safety → Original iff `B̄ < ε̲`.
pub fn next_mode(mode: Mode, b_bar: f64, cfg: &SupervisorConfig) -> Mode {
    match mode {
        Mode::Original if b_bar >= cfg.eps_high => Mode::Safety,
        Mode::Safety if b_bar < cfg.eps_low => Mode::Original,
        m => m,
    }
}

pub fn step_mode(state: &SupervisorState, b_bar: f64, cfg: &SupervisorConfig) -> SupervisorState {
    SupervisorState {
        mode: next_mode(state.mode, b_bar, cfg),
        x_k: state.x_k.clone(),
        last_b_bar: b_bar,
    }
}

/// Mode sequence produced by a recorded `B̄` trace.
pub fn replay(b_bar: &[f64], cfg: &SupervisorConfig, initial: Mode) -> Vec<Mode> {
    b_bar
        .iter()
        .scan(initial, |mode, &b| {
            *mode = next_mode(*mode, b, cfg);
            Some(*mode)
        })
        .collect()
}
