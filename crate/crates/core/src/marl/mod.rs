//! Team-based multi-agent deterministic policy-gradient trainer: two teams
//! (PENs and RANs), per-agent actors, centralized per-agent critics, shared
//! per-team replay buffers, and the training/evaluation loops.

mod buffer;
mod evaluate;
mod team;
mod trainer;

pub use buffer::{Experience, ReplayBuffer};
pub use evaluate::evaluate;
pub use team::{build_pen_team, build_ran_team, Agent, Team, UpdateConfig};
pub use trainer::{noise_scale, train, TrainConfig, TrainError, TrainLogRow, Teams};
