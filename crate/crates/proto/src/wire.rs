//! JSON bodies exchanged over the tool protocol.
//!
//! | endpoint        | request        | success body        |
//! |-----------------|----------------|---------------------|
//! | `GET /describe` |                | [`ToolDescriptor`]  |
//! | `POST /render`  | [`RenderRequest`] | [`RenderResponse`] |
//!
//! Failures carry [`ErrorBody`] with a 4xx/5xx status.

use ava_core::image::Png;
use ava_core::params::ParamVector;
use ava_core::tool::{RenderOutput, ToolError, ToolStats};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRequest {
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResponse {
    /// Base64 (standard alphabet, padded) PNG bytes.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ToolStats>,
}

impl RenderResponse {
    pub fn encode(out: &RenderOutput) -> Self {
        Self {
            image: STANDARD.encode(out.png.bytes()),
            stats: out.stats.clone(),
        }
    }

    /// Decodes the payload and checks that it is a complete PNG.
    pub fn decode(self) -> Result<RenderOutput, ToolError> {
        let bytes = STANDARD.decode(self.image.as_bytes()).map_err(|e| ToolError::Protocol {
            code: "bad_image".into(),
            message: format!("image is not base64: {e}"),
        })?;
        let png = Png(bytes);
        png.decode().map_err(|e| ToolError::Protocol {
            code: "bad_image".into(),
            message: format!("image is not a PNG: {e}"),
        })?;
        Ok(RenderOutput {
            png,
            stats: self.stats,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    pub fn from_tool_error(e: &ToolError) -> Self {
        Self::new(e.code(), e.to_string())
    }

    /// HTTP status for a tool error.
    pub fn status_of(e: &ToolError) -> u16 {
        match e {
            ToolError::InvalidParams(_) | ToolError::Protocol { .. } => 400,
            ToolError::Render(_) => 500,
            ToolError::Unreachable(_) => 502,
        }
    }
}
