//! Adaptive policy gradient: tune a pre-trained deterministic controller so an
//! additional discounted cost is minimized, using a TD-learned value critic and
//! a one-step Bellman-backed policy gradient.

pub mod critic;
pub mod env;
pub mod lqr;
pub mod num;
pub mod actor;
pub mod dynamics;
pub mod checkpoint;
pub mod trainer;
pub mod verify;
