//! Wire protocol between an agent and a visualization tool.
//!
//! A tool answers `GET /describe` with its descriptor and `POST /render`
//! with a base64 PNG plus optional measurements. [`serve_tool`] exposes any
//! [`VisTool`](ava_core::tool::VisTool); [`RemoteTool`] is the matching
//! client and is itself a `VisTool`, so the agent cannot tell local and
//! remote tools apart.

pub mod builtin;
pub mod client;
pub mod server;
pub mod wire;

pub use builtin::{open_tool, MockDrTool, ScatterTool, VolumeTool, BUILTIN_NAMES};
pub use client::{client_render, RemoteTool};
pub use server::{router, serve_tool, BindError, ToolServer};
pub use wire::{ErrorBody, RenderRequest, RenderResponse};
