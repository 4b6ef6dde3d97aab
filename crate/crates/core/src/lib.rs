//! Discrete deep reinforcement learning for joint BS precoding and IRS phase
//! control under secrecy and QoS constraints.

pub mod agent;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod numerics;
pub mod rates;
pub mod replay;

pub use error::{Error, Result};
