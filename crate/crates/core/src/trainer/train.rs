use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{ApgConfig, DynamicsKind};
use super::log::{EpisodeRecord, IterationRecord, RunLog};
use super::replay::ReplayBuffer;
use crate::actor::{grad_l2, loss_l2, update_theta, ActorError, EnvCost, Policy};
use crate::checkpoint::{self, Checkpoint, CheckpointError, Kind};
use crate::critic::{grad_l1, loss_l1, update_w, CriticError, ValueFn};
use crate::dynamics::{AnalyticDynamics, DynError, DynModel, DynamicsSource};
use crate::env::{Env, EnvError, Transition};
use crate::num::norm_sq;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical blow-up at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Dynamics(#[from] DynError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Everything an update touched, handed to [`TrainObserver::on_update`].
pub struct UpdateEvent<'a> {
    pub iteration: usize,
    pub batch: &'a [&'a Transition],
    pub critic_before: &'a ValueFn,
    pub critic_after: &'a ValueFn,
    pub policy_before: &'a Policy,
    pub policy_after: &'a Policy,
    /// Unclipped policy gradient.
    pub grad_theta: &'a [f64],
}

/// Instrumentation hooks. Both default to no-ops.
pub trait TrainObserver {
    fn on_update(&mut self, _event: &UpdateEvent<'_>) {}
    fn on_episode(&mut self, _record: &EpisodeRecord) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

fn clip(g: &mut [f64], max_norm: Option<f64>) {
    if let Some(c) = max_norm {
        let norm = norm_sq(g).sqrt();
        if norm > c {
            let s = c / norm;
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Episode-local generator: one stream per episode, so resuming after any
/// episode reproduces the uninterrupted run.
fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64 + 1);
    rng
}

/// Stateful runner of the adaptive policy-gradient loop.
pub struct Trainer<'a> {
    env: &'a dyn Env,
    cfg: ApgConfig,
    policy: Policy,
    critic: ValueFn,
    model: Option<DynModel>,
    buffer: ReplayBuffer,
    log: RunLog,
    iteration: usize,
    episode: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(
        env: &'a dyn Env,
        policy: Policy,
        critic: ValueFn,
        model: Option<DynModel>,
        cfg: ApgConfig,
    ) -> Result<Self, TrainError> {
        cfg.validate().map_err(TrainError::Config)?;
        let spec = env.spec();
        let gamma = cfg.discount(spec);
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(TrainError::Config(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        let (n, m) = (spec.state_dim, spec.control_dim);
        if policy.state_dim() != n || policy.control_dim() != m {
            return Err(TrainError::Config(format!(
                "policy maps {} states to {} controls, environment has {n} and {m}",
                policy.state_dim(),
                policy.control_dim()
            )));
        }
        if critic.state_dim() != n {
            return Err(TrainError::Config(format!(
                "critic expects {} states, environment has {n}",
                critic.state_dim()
            )));
        }
        match (&model, cfg.dynamics_source) {
            (None, DynamicsKind::Learned) => {
                return Err(TrainError::Config("learned dynamics source selected without a model".into()))
            }
            (Some(d), _) if d.state_dim() != n || d.control_dim() != m => {
                return Err(TrainError::Config("dynamics model dimensions do not match the environment".into()))
            }
            _ => {}
        }
        Ok(Trainer {
            env,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            cfg,
            policy,
            critic,
            model,
            log: RunLog::default(),
            iteration: 0,
            episode: 0,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn critic(&self) -> &ValueFn {
        &self.critic
    }

    pub fn model(&self) -> Option<&DynModel> {
        self.model.as_ref()
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn iterations_done(&self) -> usize {
        self.iteration
    }

    pub fn into_parts(self) -> (Policy, ValueFn, Option<DynModel>, RunLog) {
        (self.policy, self.critic, self.model, self.log)
    }

    /// Runs every remaining episode.
    pub fn run(&mut self, observer: &mut dyn TrainObserver) -> Result<(), TrainError> {
        while self.episode < self.cfg.episodes {
            self.run_episode(observer)?;
        }
        Ok(())
    }

    pub fn run_episode(&mut self, observer: &mut dyn TrainObserver) -> Result<(), TrainError> {
        let started = Instant::now();
        let env = self.env;
        let spec = env.spec();
        let gamma = self.cfg.discount(spec);
        let horizon = self.cfg.horizon(spec);
        let range = spec.control_range();
        let ep = self.episode;
        let alpha_w = self.cfg.alpha_w.at(ep);
        let alpha_theta = self.cfg.alpha_theta.at(ep);
        let mut rng = episode_rng(self.cfg.seed, ep);
        let mut x = env.reset(rng.next_u64());
        let cost = EnvCost {
            env,
            kind: self.cfg.cost,
        };

        let (mut steps, mut sum_l, mut disc_sum_c, mut disc) = (0, 0.0, 0.0, 1.0);
        for _ in 0..horizon {
            let mut u = self.policy.act(&x)?;
            self.cfg.noise.perturb(&mut u, &range, ep, &mut rng);
            let u = env.clamp_control(&u);
            let step = env.step(&x, &u).map_err(|e| TrainError::Diverged {
                iteration: self.iteration,
                reason: e.to_string(),
            })?;
            let c = match self.cfg.cost {
                crate::env::CostKind::Original => step.stage_cost_l,
                crate::env::CostKind::Additional => step.stage_cost_c,
            };
            steps += 1;
            sum_l += step.stage_cost_l;
            disc_sum_c += disc * step.stage_cost_c;
            disc *= gamma;
            self.buffer.push(Transition {
                x: x.clone(),
                u,
                c,
                x_next: step.next_state.clone(),
                terminal: self.cfg.terminal_absorbing && step.done,
            });
            x = step.next_state;

            if self.buffer.len() >= self.cfg.warmup() {
                self.update(&mut rng, &cost, gamma, alpha_w, alpha_theta, observer)?;
            }
            if step.done {
                break;
            }
        }

        let record = EpisodeRecord {
            episode: ep,
            steps,
            sum_l,
            disc_sum_c,
            wall_ms: self
                .cfg
                .record_wall_ms
                .then(|| started.elapsed().as_secs_f64() * 1e3),
            final_state: x,
        };
        observer.on_episode(&record);
        self.log.episodes.push(record);
        self.episode += 1;

        if self.cfg.refit_every > 0 && self.episode % self.cfg.refit_every == 0 {
            if let Some(model) = self.model.as_mut() {
                let data: Vec<&Transition> = self.buffer.iter().collect();
                model.fit(&data, &self.cfg.refit)?;
            }
        }
        Ok(())
    }

    fn update(
        &mut self,
        rng: &mut ChaCha8Rng,
        cost: &EnvCost<'_>,
        gamma: f64,
        alpha_w: f64,
        alpha_theta: f64,
        observer: &mut dyn TrainObserver,
    ) -> Result<(), TrainError> {
        let i = self.iteration;
        let diverged = |what: &str| TrainError::Diverged {
            iteration: i,
            reason: format!("non-finite {what}"),
        };
        let batch = self.buffer.sample(self.cfg.batch_size, rng);

        // critic first, then the actor against the updated critic
        let l1 = loss_l1(&self.critic, &batch, gamma)?;
        let mut g_w = grad_l1(&self.critic, &batch, gamma, self.cfg.td_gradient)?;
        if !l1.is_finite() || g_w.iter().any(|g| !g.is_finite()) {
            return Err(diverged("critic loss or gradient"));
        }
        clip(&mut g_w, self.cfg.grad_clip);
        let critic = update_w(&self.critic, &g_w, alpha_w)?;

        let analytic = AnalyticDynamics(self.env);
        let dynamics: &dyn DynamicsSource = match (self.cfg.dynamics_source, &self.model) {
            (DynamicsKind::Learned, Some(model)) => model,
            _ => &analytic,
        };
        let g_theta = grad_l2(&batch, &self.policy, &critic, dynamics, cost, gamma, self.cfg.action_mode)?;
        let l2 = loss_l2(&batch, &critic, gamma)?;
        let grad_norm_sq = norm_sq(&g_theta);
        if !l2.is_finite() || !grad_norm_sq.is_finite() {
            return Err(diverged("policy objective or gradient"));
        }
        let policy = if alpha_theta > 0.0 {
            let mut g = g_theta.clone();
            clip(&mut g, self.cfg.grad_clip);
            update_theta(&self.policy, &g, alpha_theta)?
        } else {
            self.policy.clone()
        };

        observer.on_update(&UpdateEvent {
            iteration: i,
            batch: &batch,
            critic_before: &self.critic,
            critic_after: &critic,
            policy_before: &self.policy,
            policy_after: &policy,
            grad_theta: &g_theta,
        });
        self.log.iterations.push(IterationRecord {
            i,
            l1,
            l2,
            grad_norm_sq,
            alpha_w,
            alpha_theta,
        });
        self.critic = critic;
        self.policy = policy;
        self.iteration += 1;
        Ok(())
    }

    /// Writes the full training state into `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<(), TrainError> {
        std::fs::create_dir_all(dir).map_err(CheckpointError::from)?;
        let spec = self.env.spec();
        checkpoint::policy_checkpoint(&self.policy).save(&dir.join("policy.ckpt"))?;
        checkpoint::critic_checkpoint(&self.critic).save(&dir.join("critic.ckpt"))?;
        self.buffer
            .to_checkpoint(spec.state_dim, spec.control_dim)
            .save(&dir.join("buffer.ckpt"))?;
        if let Some(model) = &self.model {
            checkpoint::dynamics_checkpoint(model).save(&dir.join("dynamics.ckpt"))?;
        }
        let (iters, eps) = self.log.flatten();
        Checkpoint {
            kind: Kind::Trainer,
            n: spec.state_dim as u32,
            m: spec.control_dim as u32,
            shape: vec![self.episode as u64, self.iteration as u64],
            params: iters,
            stats: eps,
        }
        .save(&dir.join("trainer.ckpt"))?;
        Ok(())
    }

    /// Restores a trainer saved by [`Trainer::save_checkpoint`].
    pub fn resume(env: &'a dyn Env, cfg: ApgConfig, dir: &Path) -> Result<Self, TrainError> {
        let policy = checkpoint::policy_from(&Checkpoint::load(Kind::Policy, &dir.join("policy.ckpt"))?)?;
        let critic = checkpoint::critic_from(&Checkpoint::load(Kind::Critic, &dir.join("critic.ckpt"))?)?;
        let dyn_path = dir.join("dynamics.ckpt");
        let model = if dyn_path.exists() {
            Some(checkpoint::dynamics_from(&Checkpoint::load(Kind::Dynamics, &dyn_path)?)?)
        } else {
            None
        };
        let buffer = ReplayBuffer::from_checkpoint(&Checkpoint::load(Kind::Buffer, &dir.join("buffer.ckpt"))?)?;
        let state = Checkpoint::load(Kind::Trainer, &dir.join("trainer.ckpt"))?;
        let [episode, iteration] = state.shape[..] else {
            return Err(CheckpointError::Malformed("trainer state shape".into()).into());
        };
        let log = RunLog::unflatten(&state.params, &state.stats)
            .ok_or_else(|| CheckpointError::Malformed("trainer log".into()))?;
        if buffer.capacity() != cfg.buffer_capacity {
            return Err(TrainError::Config("buffer capacity differs from the checkpoint".into()));
        }
        let mut t = Trainer::new(env, policy, critic, model, cfg)?;
        t.buffer = buffer;
        t.log = log;
        t.episode = episode as usize;
        t.iteration = iteration as usize;
        Ok(t)
    }
}

/// Runs the full loop and returns the tuned policy, critic, model and log.
pub fn train(
    env: &dyn Env,
    policy: Policy,
    critic: ValueFn,
    model: Option<DynModel>,
    cfg: &ApgConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(Policy, ValueFn, Option<DynModel>, RunLog), TrainError> {
    let mut trainer = Trainer::new(env, policy, critic, model, cfg.clone())?;
    trainer.run(observer)?;
    Ok(trainer.into_parts())
}
