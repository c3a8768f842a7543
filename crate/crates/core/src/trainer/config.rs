use serde::{Deserialize, Serialize};

use crate::actor::{ActionMode, ExplorationNoise};
use crate::critic::TdGradient;
use crate::dynamics::FitConfig;
use crate::env::{CostKind, EnvSpec};

/// Step size `initial · decay^episode`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub initial: f64,
    #[serde(default = "unit")]
    pub decay: f64,
}

fn unit() -> f64 {
    1.0
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            initial: value,
            decay: 1.0,
        }
    }

    pub fn at(&self, episode: usize) -> f64 {
        self.initial * self.decay.powi(episode as i32)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    #[default]
    Analytic,
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApgConfig {
    pub episodes: usize,
    /// Defaults to the environment's horizon.
    pub task_horizon: Option<usize>,
    /// Defaults to the environment's additional-loss discount.
    pub gamma: Option<f64>,
    pub batch_size: usize,
    pub alpha_w: Schedule,
    pub alpha_theta: Schedule,
    pub buffer_capacity: usize,
    /// Defaults to the batch size.
    pub warmup_min_samples: Option<usize>,
    pub noise: ExplorationNoise,
    pub dynamics_source: DynamicsKind,
    pub td_gradient: TdGradient,
    pub action_mode: ActionMode,
    /// Flat rescale of each gradient to at most this norm.
    pub grad_clip: Option<f64>,
    /// Stage cost the critic and actor optimize.
    pub cost: CostKind,
    /// Treat environment termination as an absorbing zero-value state.
    pub terminal_absorbing: bool,
    /// Refit a learned dynamics model every this many episodes (0 disables).
    pub refit_every: usize,
    pub refit: FitConfig,
    pub record_wall_ms: bool,
    pub seed: u64,
}

impl Default for ApgConfig {
    fn default() -> Self {
        ApgConfig {
            episodes: 100,
            task_horizon: None,
            gamma: None,
            batch_size: 64,
            alpha_w: Schedule {
                initial: 1e-3,
                decay: 0.99,
            },
            alpha_theta: Schedule {
                initial: 1e-4,
                decay: 0.99,
            },
            buffer_capacity: 100_000,
            warmup_min_samples: None,
            noise: ExplorationNoise::default(),
            dynamics_source: DynamicsKind::Analytic,
            td_gradient: TdGradient::Residual,
            action_mode: ActionMode::Stored,
            grad_clip: Some(10.0),
            cost: CostKind::Additional,
            terminal_absorbing: false,
            refit_every: 10,
            refit: FitConfig::default(),
            record_wall_ms: false,
            seed: 0,
        }
    }
}

impl ApgConfig {
    pub fn horizon(&self, spec: &EnvSpec) -> usize {
        self.task_horizon.unwrap_or(spec.task_horizon)
    }

    pub fn discount(&self, spec: &EnvSpec) -> f64 {
        self.gamma.unwrap_or(spec.gamma)
    }

    pub fn warmup(&self) -> usize {
        self.warmup_min_samples.unwrap_or(self.batch_size)
    }

    /// Checks every constraint that does not depend on the environment.
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if self.buffer_capacity == 0 {
            return Err("buffer_capacity must be at least 1".into());
        }
        if self.warmup() > self.buffer_capacity {
            return Err(format!(
                "warmup_min_samples {} exceeds buffer_capacity {}",
                self.warmup(),
                self.buffer_capacity
            ));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(format!("gamma must lie in (0, 1], got {g}"));
            }
        }
        if self.task_horizon == Some(0) {
            return Err("task_horizon must be at least 1".into());
        }
        for (name, s) in [("alpha_w", self.alpha_w), ("alpha_theta", self.alpha_theta)] {
            if !(s.initial >= 0.0 && s.initial.is_finite() && s.decay > 0.0 && s.decay.is_finite()) {
                return Err(format!("{name} needs a finite non-negative initial value and positive decay"));
            }
        }
        for ep in 0..self.episodes.max(1) {
            let (w, th) = (self.alpha_w.at(ep), self.alpha_theta.at(ep));
            if !(w > th) {
                return Err(format!(
                    "critic step must exceed actor step (alpha_w > alpha_theta) at every iteration; episode {ep} has alpha_w = {w:e}, alpha_theta = {th:e}"
                ));
            }
        }
        if !(self.noise.std_fraction >= 0.0) || !(self.noise.decay > 0.0) {
            return Err("noise std_fraction must be non-negative and decay positive".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ApgConfig::default().validate().unwrap();
        assert_eq!(ApgConfig::default().warmup(), 64);
    }

    #[test]
    fn step_ordering_is_enforced() {
        let mut cfg = ApgConfig::default();
        cfg.alpha_theta = Schedule::constant(1e-3);
        cfg.alpha_w = Schedule::constant(1e-3);
        assert!(cfg.validate().unwrap_err().contains("alpha_w > alpha_theta"));
        // slower critic decay overtaken later in training
        cfg.alpha_w = Schedule { initial: 2e-3, decay: 0.9 };
        cfg.alpha_theta = Schedule { initial: 1e-3, decay: 1.0 };
        cfg.episodes = 20;
        assert!(cfg.validate().unwrap_err().contains("episode 7"));
        cfg.alpha_theta = Schedule::constant(0.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn schedule_decays_per_episode() {
        let s = Schedule { initial: 1.0, decay: 0.5 };
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(3), 0.125);
    }
}
