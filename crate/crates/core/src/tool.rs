//! The agent's view of a visualization tool.
//!
//! Anything that can describe its parameter space and turn a parameter
//! vector into a PNG is a [`VisTool`]: the built-in renderers in-process, or
//! a remote process reached over the wire protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::image::Png;
use crate::params::{ParamError, ParamSpace, ParamVector};
use crate::perception::{EmbeddingStats, OverplotMetrics, StructureStat};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ToolMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    #[serde(rename = "ava_proto")]
    pub protocol_version: u32,
    pub param_space: ParamSpace,
    #[serde(default)]
    pub metadata: ToolMetadata,
}

impl ToolDescriptor {
    pub fn new(name: impl Into<String>, param_space: ParamSpace, metadata: ToolMetadata) -> Self {
        Self {
            name: name.into(),
            protocol_version: PROTOCOL_VERSION,
            param_space,
            metadata,
        }
    }

    pub fn validate(&self) -> Result<(), ToolError> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(ToolError::Protocol {
                code: "unsupported_version".into(),
                message: format!("tool speaks protocol {}", self.protocol_version),
            });
        }
        if self.param_space.is_empty() {
            return Err(ToolError::Protocol {
                code: "empty_param_space".into(),
                message: format!("tool `{}` declares no parameters", self.name),
            });
        }
        self.param_space.validate()?;
        Ok(())
    }
}

/// Side-channel measurements a tool may return with an image. Oracle
/// perceptions read these instead of looking at pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToolStats {
    Volume {
        structures: BTreeMap<String, StructureStat>,
    },
    Scatter(OverplotMetrics),
    Embedding(EmbeddingStats),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub png: Png,
    pub stats: Option<ToolStats>,
}

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("tool unreachable: {0}")]
    Unreachable(String),
    #[error("protocol error `{code}`: {message}")]
    Protocol { code: String, message: String },
    #[error("invalid parameters: {0}")]
    InvalidParams(#[from] ParamError),
    #[error("render failed: {0}")]
    Render(String),
}

impl ToolError {
    /// Machine-readable code used on the wire.
    pub fn code(&self) -> &str {
        match self {
            ToolError::Unreachable(_) => "tool_unreachable",
            ToolError::Protocol { code, .. } => code,
            ToolError::InvalidParams(ParamError::OutOfBounds { .. }) => "param_out_of_bounds",
            ToolError::InvalidParams(ParamError::Unknown(_)) => "unknown_param",
            ToolError::InvalidParams(ParamError::Missing(_)) => "missing_param",
            ToolError::InvalidParams(_) => "invalid_param",
            ToolError::Render(_) => "render_failed",
        }
    }
}

pub trait VisTool: Send + Sync {
    fn describe(&self) -> Result<ToolDescriptor, ToolError>;
    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError>;
}

impl<T: VisTool + ?Sized> VisTool for std::sync::Arc<T> {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        (**self).describe()
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        (**self).render(params)
    }
}

impl<T: VisTool + ?Sized> VisTool for Box<T> {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        (**self).describe()
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        (**self).render(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamEntry;

    #[test]
    fn descriptor_wire_names() {
        let d = ToolDescriptor::new(
            "volume",
            ParamSpace::new(vec![ParamEntry::continuous("start", 0.0, 255.0)]).unwrap(),
            ToolMetadata {
                value_range: Some((0.0, 255.0)),
                ..Default::default()
            },
        );
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["ava_proto"], 1);
        assert_eq!(json["param_space"][0]["name"], "start");
        let back: ToolDescriptor = serde_json::from_value(json).unwrap();
        assert_eq!(back, d);
        d.validate().unwrap();
    }

    #[test]
    fn descriptor_invariants() {
        let mut d = ToolDescriptor::new("x", ParamSpace::default(), ToolMetadata::default());
        assert_eq!(d.validate().unwrap_err().code(), "empty_param_space");
        d.param_space = ParamSpace::new(vec![ParamEntry::continuous("a", 0.0, 1.0)]).unwrap();
        d.protocol_version = 2;
        assert_eq!(d.validate().unwrap_err().code(), "unsupported_version");
    }

    #[test]
    fn stats_are_tagged() {
        let s = ToolStats::Scatter(OverplotMetrics {
            saturated_fraction: 0.5,
            faintness: 0.2,
            covered_fraction: 0.1,
        });
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["kind"], "scatter");
        assert_eq!(json["faintness"], 0.2);
        assert_eq!(serde_json::from_value::<ToolStats>(json).unwrap(), s);
    }
}
