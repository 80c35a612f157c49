//! Blocking client for tools served over the wire protocol.

use std::time::Duration;

use ava_core::params::ParamVector;
use ava_core::tool::{RenderOutput, ToolDescriptor, ToolError, VisTool};

use crate::wire::{ErrorBody, RenderRequest, RenderResponse};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
const BODY_LIMIT: u64 = 256 * 1024 * 1024;

/// A tool behind an HTTP endpoint. Transport failures are retried once.
#[derive(Debug, Clone)]
pub struct RemoteTool {
    base: String,
    agent: ureq::Agent,
}

impl RemoteTool {
    pub fn new(endpoint: &str) -> Self {
        Self::with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    /// Sends one request (retrying once on transport failure) and returns
    /// status and body text.
    fn exchange(&self, path: &str, body: Option<&[u8]>) -> Result<(u16, String), ToolError> {
        let url = format!("{}{path}", self.base);
        let mut last = String::new();
        for attempt in 0..2 {
            let result = match body {
                Some(b) => self
                    .agent
                    .post(&url)
                    .header("Content-Type", "application/json")
                    .send(b),
                None => self.agent.get(&url).call(),
            };
            match result {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .with_config()
                        .limit(BODY_LIMIT)
                        .read_to_string()
                        .map_err(|e| ToolError::Protocol {
                            code: "malformed_response".into(),
                            message: format!("reading {url}: {e}"),
                        })?;
                    return Ok((status, text));
                }
                Err(e) => {
                    tracing::debug!(attempt, %url, error = %e, "tool request failed");
                    last = e.to_string();
                }
            }
        }
        Err(ToolError::Unreachable(format!("{url}: {last}")))
    }

    fn parse<T: serde::de::DeserializeOwned>(&self, status: u16, text: &str) -> Result<T, ToolError> {
        if !(200..300).contains(&status) {
            return Err(match serde_json::from_str::<ErrorBody>(text) {
                Ok(b) => ToolError::Protocol {
                    code: b.error.code,
                    message: b.error.message,
                },
                Err(_) => ToolError::Protocol {
                    code: format!("http_{status}"),
                    message: text.chars().take(200).collect(),
                },
            });
        }
        serde_json::from_str(text).map_err(|e| ToolError::Protocol {
            code: "malformed_response".into(),
            message: e.to_string(),
        })
    }
}

impl VisTool for RemoteTool {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        let (status, text) = self.exchange("/describe", None)?;
        let d: ToolDescriptor = self.parse(status, &text)?;
        d.validate()?;
        Ok(d)
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        let body = serde_json::to_vec(&RenderRequest { params: params.clone() })
            .map_err(|e| ToolError::Render(e.to_string()))?;
        let (status, text) = self.exchange("/render", Some(&body))?;
        let resp: RenderResponse = self.parse(status, &text)?;
        resp.decode()
    }
}

/// One-shot render against an endpoint.
pub fn client_render(endpoint: &str, params: &ParamVector) -> Result<RenderOutput, ToolError> {
    RemoteTool::new(endpoint).render(params)
}
