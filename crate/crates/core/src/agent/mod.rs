//! The camera designer: a PPO actor-critic over an action spec, the
//! environments it is trained in, and the random-search baseline.

pub mod env;
pub mod gae;
pub mod policy;
pub mod ppo;
pub mod train;

pub use env::{
    depth_reward, stereo_reward, Environment, PmSlot, RigConfig, RigEnv, StepInfo, StepResult, StereoConfig, StereoEnv,
    ToyEnv,
};
pub use gae::{compute_gae, Trajectory};
pub use policy::{Decision, Policy};
pub use ppo::{loss_and_grad, ppo_update, Batch, PpoConfig, PpoStats};
pub use train::{
    evaluate_protocol, random_search, run_episode, train, Candidate, Episode, ProtocolConfig, ProtocolOutcome,
    SearchOutcome, TraceRow, TrainConfig, TrainOutcome,
};
