//! The adaptive policy-gradient loop: exploration, replay, interleaved
//! critic and actor updates, logging and rate diagnostics.

mod config;
mod log;
mod pretrain;
mod rate;
mod replay;
mod train;

pub use config::{ApgConfig, DynamicsKind, Schedule};
pub use log::{EpisodeRecord, IterationRecord, RunLog};
pub use pretrain::{behavior_clone, collect_transitions, lqr_policy, pretrain_rl};
pub use rate::{rate_diagnostic, RateDiagnostic, RateError};
pub use replay::ReplayBuffer;
pub use train::{train, NoObserver, TrainError, TrainObserver, Trainer, UpdateEvent};
