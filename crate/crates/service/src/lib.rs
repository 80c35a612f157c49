//! Session service: start agent runs, follow their records as server-sent
//! events, and pause, resume, abort or steer them.
//!
//! | route                          | purpose                               |
//! |--------------------------------|---------------------------------------|
//! | `POST /sessions`               | start a run, returns its id           |
//! | `GET /sessions`                | summaries of every session            |
//! | `GET /sessions/{id}`           | session JSON with the live status     |
//! | `GET /sessions/{id}/events`    | replay of past events, then live ones |
//! | `POST /sessions/{id}/control`  | pause, resume, abort, override, amend |
//! | `GET /images/{hash}`           | a rendered PNG                        |

pub mod http;
pub mod registry;

pub use http::{router, serve, ServeError, ServiceServer};
pub use registry::{
    ApiError, ControlCommand, CreateSession, EventBody, Registry, SessionEvent, SessionSummary, ABORTED, INTERRUPTED,
};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "AVA_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "ava-data";

/// The data directory from the environment, or the default.
pub fn data_dir_from_env() -> std::path::PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(Into::into)
        .unwrap_or_else(|| DEFAULT_DATA_DIR.into())
}
