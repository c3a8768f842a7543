//! Experiment configuration: one JSON document with the sections `env`,
//! `policy`, `critic`, `dynamics`, `trainer` and `output`.

use std::path::Path;

use apg_core::dynamics::FitConfig;
use apg_core::env::EnvConfig;
use apg_core::trainer::{ApgConfig, DynamicsKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub critic: CriticConfig,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    pub trainer: TrainerSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A named point or explicit coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Named(NamedPoint),
    Value(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPoint {
    /// All zeros.
    Origin,
    /// The environment's regulation target (arm goal joints at rest, lander
    /// pad, cart-pole target position, LQ target).
    Goal,
    /// The control that holds `x_eq` fixed under the selected dynamics.
    Equilibrium,
}

fn origin() -> Point {
    Point::Named(NamedPoint::Origin)
}

fn equilibrium() -> Point {
    Point::Named(NamedPoint::Equilibrium)
}

/// Starting policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// Discounted LQR gain on a linearization.
    Lqr(LqrPolicy),
    /// `u = −Kx + b`.
    Linear {
        gain: Vec<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    /// Randomly initialised tanh network squashed into the control bounds.
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrPolicy {
    /// Diagonal of the state weight.
    pub q: Vec<f64>,
    /// Diagonal of the control weight.
    pub r: Vec<f64>,
    /// Defaults to the environment's discount for the original cost.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "origin")]
    pub x_eq: Point,
    #[serde(default = "equilibrium")]
    pub u_eq: Point,
    /// Train only the gain, keeping the operating point fixed.
    #[serde(default)]
    pub anchored: bool,
    /// Linearize the analytic model or the learned one.
    #[serde(default)]
    pub linearization: DynamicsKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CriticConfig {
    /// `V(x) = x̃ᵀPx̃` with `x̃ = x / scale`, starting at zero.
    Quadratic { scale: Vec<f64> },
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    /// Learned model fitted before training; required whenever a stage or
    /// the policy linearization uses the learned source.
    pub model: Option<ModelConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    /// Episodes of uniformly random controls used as training data.
    pub data_episodes: usize,
    pub data_horizon: usize,
    pub fit: FitConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: vec![32, 32],
            data_episodes: 300,
            data_horizon: 100,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    /// Seeds every stage; overrides the per-stage seeds.
    #[serde(default)]
    pub seed: u64,
    /// Optional stage on the original cost before adaptation.
    #[serde(default)]
    pub pretrain: Option<ApgConfig>,
    pub adapt: ApgConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub checkpoints: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { checkpoints: true }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |stage: &str, msg: String| CliError::Config(format!("trainer.{stage}: {msg}"));
        if let Some(pre) = &self.trainer.pretrain {
            pre.validate().map_err(|m| bad("pretrain", m))?;
        }
        self.trainer.adapt.validate().map_err(|m| bad("adapt", m))?;
        let env = self.env.build().map_err(|e| CliError::Config(format!("env: {e}")))?;
        let spec = env.spec();
        let n = spec.state_dim;
        let m = spec.control_dim;

        let learned_stage = self
            .stages()
            .any(|(_, c)| c.dynamics_source == DynamicsKind::Learned);
        let learned_policy = matches!(&self.policy, PolicyConfig::Lqr(l) if l.linearization == DynamicsKind::Learned);
        if (learned_stage || learned_policy) && self.dynamics.model.is_none() {
            return Err(CliError::Config(
                "the learned dynamics source is selected but dynamics.model is missing".into(),
            ));
        }

        let dim = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} has {got} entries, expected {want}")))
            }
        };
        match &self.policy {
            PolicyConfig::Lqr(l) => {
                dim("policy.q", l.q.len(), n)?;
                dim("policy.r", l.r.len(), m)?;
                if let Point::Value(v) = &l.x_eq {
                    dim("policy.x_eq", v.len(), n)?;
                }
                match &l.u_eq {
                    Point::Value(v) => dim("policy.u_eq", v.len(), m)?,
                    Point::Named(NamedPoint::Goal) => {
                        return Err(CliError::Config("policy.u_eq cannot be \"goal\"".into()))
                    }
                    _ => {}
                }
                if l.x_eq == Point::Named(NamedPoint::Equilibrium) {
                    return Err(CliError::Config("policy.x_eq cannot be \"equilibrium\"".into()));
                }
            }
            PolicyConfig::Linear { gain, offset } => {
                dim("policy.gain", gain.len(), m)?;
                for row in gain {
                    dim("policy.gain row", row.len(), n)?;
                }
                if let Some(b) = offset {
                    dim("policy.offset", b.len(), m)?;
                }
            }
            PolicyConfig::Mlp { .. } => {}
        }
        if let CriticConfig::Quadratic { scale } = &self.critic {
            dim("critic.scale", scale.len(), n)?;
            if scale.iter().any(|s| !(*s > 0.0)) {
                return Err(CliError::Config("critic.scale entries must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> impl Iterator<Item = (&'static str, &ApgConfig)> {
        self.trainer
            .pretrain
            .iter()
            .map(|c| ("pretrain", c))
            .chain(std::iter::once(("adapt", &self.trainer.adapt)))
    }

    /// Copy with every stage seed replaced by `seed`.
    pub fn with_seed(&self, seed: u64) -> RunConfig {
        let mut cfg = self.clone();
        cfg.trainer.seed = seed;
        if let Some(pre) = &mut cfg.trainer.pretrain {
            pre.seed = seed;
            pre.refit.seed = seed;
        }
        cfg.trainer.adapt.seed = seed;
        cfg.trainer.adapt.refit.seed = seed;
        if let Some(model) = &mut cfg.dynamics.model {
            model.fit.seed = seed;
        }
        cfg
    }

    /// Fully defaulted document with keys in sorted order.
    pub fn canonical_json(&self) -> serde_json::Value {
        // serde_json's map is ordered by key without the preserve_order feature
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the compact canonical form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
