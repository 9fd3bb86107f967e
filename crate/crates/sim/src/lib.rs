//! Scenario execution on top of `manikin-core`: configuration files, target
//! trajectories and retargeting, the frame loop, metrics, builtin scenarios
//! and the live WebSocket bridge.

pub mod assets;
pub mod builtin;
pub mod config;
pub mod error;
pub mod metrics;
pub mod protocol;
pub mod runner;
pub mod server;
pub mod session;
pub mod trajectory;

pub use error::{Error, Result};
