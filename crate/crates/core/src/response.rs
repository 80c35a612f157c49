//! Tagged agent responses.
//!
//! Models are asked to answer in four tagged sections:
//!
//! ```text
//! REASONING: why the image looks the way it does
//! PLAN: what to try next
//! ASSESSMENT: not recognizable | recognizable | clear | ...
//! PARAMS: {"start": 80, "end": 105}
//! ```
//!
//! Tags are matched case-insensitively at the start of a line, in any order.
//! Markdown decoration such as `**PLAN:**` is tolerated.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::params::{ParamValue, ParamVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ResponseError {
    #[error("response has no ASSESSMENT section")]
    MissingAssessment,
    #[error("malformed PARAMS section: {0}")]
    MalformedParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParsedResponse {
    pub reasoning: String,
    pub plan: String,
    pub assessment_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposed_params: Option<ParamVector>,
}

static TAG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t>*#_\-]*(reasoning|plan|assessment|params)[ \t*_]*:[ \t*_]*").unwrap()
});

static PAIR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"([A-Za-z_][A-Za-z0-9_\-]*)\s*[=:]\s*("[^"]*"|[^,;\s}]+)"#).unwrap()
});

pub fn parse_agent_response(text: &str) -> Result<ParsedResponse, ResponseError> {
    let tags: Vec<_> = TAG.captures_iter(text).collect();
    let mut reasoning = None;
    let mut plan = None;
    let mut assessment = None;
    let mut params = None;
    for (i, cap) in tags.iter().enumerate() {
        let whole = cap.get(0).unwrap();
        let end = tags.get(i + 1).map_or(text.len(), |next| next.get(0).unwrap().start());
        let body = text[whole.end()..end].trim();
        let slot = match cap[1].to_ascii_lowercase().as_str() {
            "reasoning" => &mut reasoning,
            "plan" => &mut plan,
            "assessment" => &mut assessment,
            _ => &mut params,
        };
        // First occurrence wins; models sometimes echo the format at the end.
        if slot.is_none() {
            *slot = Some(body);
        }
    }
    let label = assessment
        .map(|a| a.trim_matches(|c: char| c == '\'' || c == '"' || c == '.' || c.is_whitespace()))
        .filter(|a| !a.is_empty())
        .ok_or(ResponseError::MissingAssessment)?;
    let proposed_params = match params {
        Some(body) => parse_params(body)?,
        None => None,
    };
    Ok(ParsedResponse {
        reasoning: reasoning.unwrap_or_default().to_string(),
        plan: plan.unwrap_or_default().to_string(),
        assessment_label: label.to_string(),
        proposed_params,
    })
}

fn parse_params(body: &str) -> Result<Option<ParamVector>, ResponseError> {
    let body = body
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    let lowered = body.to_ascii_lowercase();
    if body.is_empty() || matches!(lowered.as_str(), "none" | "n/a" | "-" | "{}") {
        return Ok(None);
    }
    if body.starts_with('{') {
        // Only the first JSON object; trailing prose is ignored.
        let mut stream = serde_json::Deserializer::from_str(body)
            .into_iter::<serde_json::Map<String, serde_json::Value>>();
        let map = match stream.next() {
            Some(Ok(map)) => map,
            Some(Err(e)) => return Err(ResponseError::MalformedParams(e.to_string())),
            None => return Ok(None),
        };
        let mut out = ParamVector::new();
        for (k, v) in map {
            let value = match v {
                serde_json::Value::Number(n) => ParamValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                serde_json::Value::String(s) => ParamValue::Choice(s),
                other => {
                    return Err(ResponseError::MalformedParams(format!(
                        "unsupported value for `{k}`: {other}"
                    )))
                }
            };
            out.set(k, value);
        }
        return Ok((!out.is_empty()).then_some(out));
    }
    let mut out = ParamVector::new();
    for cap in PAIR.captures_iter(body) {
        let raw = cap[2].trim_matches('"');
        let value = match raw.parse::<f64>() {
            Ok(n) => ParamValue::Number(n),
            Err(_) => ParamValue::Choice(raw.to_string()),
        };
        out.set(cap[1].to_string(), value);
    }
    if out.is_empty() {
        return Err(ResponseError::MalformedParams(format!("no key=value pairs in `{body}`")));
    }
    Ok(Some(out))
}

/// Canonical text form; [`parse_agent_response`] inverts it for any
/// response whose sections are trimmed and contain no tag-prefixed lines.
pub fn format_response(r: &ParsedResponse) -> String {
    let mut out = format!(
        "REASONING: {}\nPLAN: {}\nASSESSMENT: {}",
        r.reasoning, r.plan, r.assessment_label
    );
    if let Some(p) = &r.proposed_params {
        out.push_str("\nPARAMS: ");
        out.push_str(&serde_json::to_string(p).expect("param vectors always serialize"));
    }
    out
}
