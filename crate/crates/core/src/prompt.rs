//! Role prompt templating.
//!
//! Templates use `{name}` placeholders; `{{` and `}}` produce literal braces.
//! Bindings come from the caller's field map first, then from the config:
//! `visualization task` / `task`, `approach`, `scenario`, `constraints`, and
//! `constraints_clause` (empty when there are no constraints).

use std::collections::BTreeMap;

use crate::config::AgentConfig;

pub const DEFAULT_ROLE_TEMPLATE: &str = "You are an autonomous visualization agent tasked with \
assisting a user in {visualization task}. In each step, you will receive a screenshot and you \
will assess the image and provide the {approach}. Your goal is to determine {goal}. Achieve \
this goal by {approach}{constraints_clause}.";

/// Appended to every role prompt so replies can be parsed by
/// [`crate::response::parse_agent_response`].
pub const RESPONSE_FORMAT: &str = "Answer with exactly these tagged sections, each starting on \
its own line: REASONING: what you see and why. PLAN: what you will try next. ASSESSMENT: your \
verdict using only the allowed labels. PARAMS: the next parameter values as a JSON object, or \
none when no change is needed.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template placeholder `{0}` has no binding")]
    MissingField(String),
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
}

pub fn render_role_prompt(
    config: &AgentConfig,
    fields: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let template = if config.goal_template.trim().is_empty() {
        DEFAULT_ROLE_TEMPLATE
    } else {
        config.goal_template.as_str()
    };
    let body = substitute(template, |name| {
        if let Some(v) = fields.get(name) {
            return Some(v.clone());
        }
        match name {
            "visualization task" | "task" => Some(config.task.clone()),
            "approach" => Some(config.approach.clone()),
            "scenario" => Some(config.scenario.clone()),
            "constraints" => Some(config.constraints.join("; ")),
            "constraints_clause" => Some(if config.constraints.is_empty() {
                String::new()
            } else {
                format!(
                    ", adhering to the following constraints: {}",
                    config.constraints.join("; ")
                )
            }),
            _ => None,
        }
    })?;
    Ok(format!("{body}\n\n{RESPONSE_FORMAT}"))
}

fn substitute(
    template: &str,
    mut lookup: impl FnMut(&str) -> Option<String>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    let mut offset = 0;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
            offset += i + 2;
            continue;
        }
        if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
            offset += i + 2;
            continue;
        }
        if tail.starts_with('}') {
            return Err(PromptError::Unbalanced(offset + i));
        }
        let close = tail.find('}').ok_or(PromptError::Unbalanced(offset + i))?;
        let name = &tail[1..close];
        if name.contains('{') {
            return Err(PromptError::Unbalanced(offset + i));
        }
        let value = lookup(name.trim()).ok_or_else(|| PromptError::MissingField(name.to_string()))?;
        out.push_str(&value);
        rest = &tail[close + 1..];
        offset += i + close + 1;
    }
    out.push_str(rest);
    Ok(out)
}
