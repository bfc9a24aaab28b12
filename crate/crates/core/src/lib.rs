//! Camera-designer toolkit: an imaging-system grammar, a PPO camera
//! designer, and two simulated environments (stereo depth and vehicle rig
//! visibility) in which camera configurations are co-optimized with a
//! trainable perception model.

pub mod agent;
pub mod checkpoint;
pub mod error;
pub mod grammar;
pub mod harness;
pub mod nn;
pub mod perception;
pub mod search_space;
pub mod sim_rig;
pub mod sim_stereo;

pub use error::{Error, RejectReason, Result};
