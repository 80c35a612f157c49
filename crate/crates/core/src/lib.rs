//! Core of the autonomous visualization agent: parameters, perception,
//! planners, the agent loop, and session memory.

pub mod agent;
pub mod config;
pub mod image;
pub mod params;
pub mod perception;
pub mod planners;
pub mod prompt;
pub mod response;
pub mod session;
pub mod store;
pub mod tool;

pub use agent::{run_loop, Checkpoint, Directive, LoopError, LoopObserver, RunOptions};
pub use config::AgentConfig;
pub use params::{ParamEntry, ParamSpace, ParamValue, ParamVector};
pub use session::{IterationRecord, Session, SessionStatus};
