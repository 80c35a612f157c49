//! Vision-model perception.

use std::sync::Mutex;

use super::chat::{ChatClient, ChatError, ChatMessage, ChatRequest, ChatResponse};
use super::{Perceived, Perception, PerceptionError, PerceptionInput, TokenUsage};
use crate::image::Png;
use crate::params::{ParamKind, ParamSpace};
use crate::response::{parse_agent_response, ParsedResponse};

pub const MAX_IMAGES: usize = 4;

/// Anything that answers chat requests. [`ChatClient`] talks to a provider;
/// tests plug in closures.
pub trait ChatBackend: Send + Sync {
    fn chat_complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError>;
}

impl ChatBackend for ChatClient {
    fn chat_complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        ChatClient::chat_complete(self, request)
    }
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, ChatError> + Send + Sync,
{
    fn chat_complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        self(request)
    }
}

/// Sends the images with the role prompt and context, and parses the tagged
/// reply.
pub fn llm_assess(
    backend: &dyn ChatBackend,
    images: &[Png],
    role_prompt: &str,
    context: &str,
) -> Result<(ParsedResponse, ChatResponse), PerceptionError> {
    if images.is_empty() || images.len() > MAX_IMAGES {
        return Err(PerceptionError::ImageCount {
            got: images.len(),
            max: MAX_IMAGES,
        });
    }
    let request = ChatRequest {
        messages: vec![
            ChatMessage::system(role_prompt),
            ChatMessage::user(context, images.to_vec()),
        ],
        model: None,
        max_tokens: None,
    };
    let response = backend.chat_complete(&request)?;
    let parsed = parse_agent_response(&response.text)?;
    Ok((parsed, response))
}

/// Describes the parameter space in the form shown to the model.
pub fn describe_space(space: &ParamSpace) -> String {
    space
        .entries()
        .iter()
        .map(|e| match e.kind {
            ParamKind::Categorical => format!(
                "- {} (one of: {})",
                e.name,
                e.choices.as_deref().unwrap_or_default().join(", ")
            ),
            ParamKind::Integer => format!("- {} (integer in [{}, {}])", e.name, e.lower, e.upper),
            ParamKind::Continuous => format!("- {} (number in [{}, {}])", e.name, e.lower, e.upper),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Perception backed by a chat model. The current frame is always the first
/// image; a planner-requested baseline frame is the second.
pub struct LlmPerception {
    backend: Box<dyn ChatBackend>,
    /// Labels the model may use in the ASSESSMENT section for single frames.
    pub labels: Vec<String>,
    /// Question asked when a baseline frame is attached.
    pub comparison_question: String,
    usage: Mutex<TokenUsage>,
}

pub const DEFAULT_COMPARISON_QUESTION: &str = "Two scatterplots of the same data are attached. \
The first uses the current opacity, the second the previous one. Which opacity is better suited \
to show the density of the points without saturating overlapping regions? Answer ASSESSMENT with \
\"first better\" or \"second better\", and append \", other too low\" if the points in either \
image are too faint to see.";

impl LlmPerception {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Self {
            backend,
            labels: vec!["not recognizable".into(), "recognizable".into(), "clear".into()],
            comparison_question: DEFAULT_COMPARISON_QUESTION.into(),
            usage: Mutex::new(TokenUsage::default()),
        }
    }

    fn user_text(&self, input: &PerceptionInput<'_>) -> String {
        let mut text = String::new();
        if !input.context.is_empty() {
            text.push_str("Previous steps:\n");
            text.push_str(input.context);
            text.push_str("\n\n");
        }
        text.push_str(&format!("Step {}. Current parameters: {}\n", input.current.step, input.current.params));
        text.push_str("Adjustable parameters:\n");
        text.push_str(&describe_space(input.space));
        text.push_str("\n\n");
        if input.baseline.is_some() {
            text.push_str(&self.comparison_question);
        } else {
            text.push_str("Allowed ASSESSMENT labels: ");
            text.push_str(&self.labels.join(", "));
            text.push('.');
        }
        text
    }
}

impl Perception for LlmPerception {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        let mut images = vec![input.current.png.clone()];
        if let Some(b) = input.baseline {
            images.push(b.png.clone());
        }
        let context = self.user_text(input);
        let (parsed, response) = llm_assess(&*self.backend, &images, input.role_prompt, &context)?;
        self.usage.lock().unwrap().add(response.usage);
        Ok(Perceived::from_response(parsed))
    }

    fn usage(&self) -> TokenUsage {
        *self.usage.lock().unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::perception::{Observation, Verdict};
    use crate::params::{ParamEntry, ParamVector};

    fn stub(text: &'static str) -> impl ChatBackend {
        move |_: &ChatRequest| {
            Ok(ChatResponse {
                text: text.to_string(),
                usage: TokenUsage {
                    prompt_tokens: 10,
                    completion_tokens: 5,
                    requests: 1,
                },
                attempts: vec![200],
            })
        }
    }

    fn png() -> Png {
        Image::new(2, 2, [0, 0, 0, 255]).to_png().unwrap()
    }

    #[test]
    fn recognizable_label() {
        let (r, _) = llm_assess(&stub("ASSESSMENT: recognizable"), &[png()], "role", "").unwrap();
        assert_eq!(r.assessment_label, "recognizable");
    }

    #[test]
    fn full_response_with_params() {
        let text = "REASONING: The image shows the outer shell of the teapot but nothing inside.\n\
                    PLAN: Move the window toward higher values.\n\
                    ASSESSMENT: Not recognizable\n\
                    PARAMS: {\"start\": 80, \"end\": 105}";
        let (r, _) = llm_assess(&stub(text), &[png()], "role", "ctx").unwrap();
        assert_eq!(
            r.proposed_params,
            Some(ParamVector::new().with("start", 80.0).with("end", 105.0))
        );
        assert!(r.plan.starts_with("Move the window"));
    }

    #[test]
    fn untagged_prose_is_rejected() {
        let err = llm_assess(&stub("It looks great to me."), &[png()], "role", "").unwrap_err();
        assert!(matches!(
            err,
            PerceptionError::Response(crate::response::ResponseError::MissingAssessment)
        ));
    }

    #[test]
    fn image_count_limits() {
        let s = stub("ASSESSMENT: clear");
        assert!(matches!(
            llm_assess(&s, &[], "r", ""),
            Err(PerceptionError::ImageCount { got: 0, .. })
        ));
        let five = vec![png(); 5];
        assert!(matches!(
            llm_assess(&s, &five, "r", ""),
            Err(PerceptionError::ImageCount { got: 5, .. })
        ));
    }

    #[test]
    fn perception_sends_baseline_second_and_counts_tokens() {
        let seen = std::sync::Arc::new(Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        let backend = move |req: &ChatRequest| {
            seen2.lock().unwrap().push(req.messages[1].images.len());
            Ok(ChatResponse {
                text: "ASSESSMENT: second better".into(),
                usage: TokenUsage {
                    prompt_tokens: 7,
                    completion_tokens: 3,
                    requests: 1,
                },
                attempts: vec![200],
            })
        };
        let mut p = LlmPerception::new(Box::new(backend));
        let space = ParamSpace::new(vec![ParamEntry::continuous("opacity", 0.0, 1.0)]).unwrap();
        let obs = |step| Observation {
            step,
            params: ParamVector::new().with("opacity", 0.5),
            png: png(),
            stats: None,
        };
        let (cur, base) = (obs(1), obs(0));
        let out = p
            .perceive(&PerceptionInput {
                role_prompt: "r",
                context: "",
                space: &space,
                current: &cur,
                baseline: Some(&base),
            })
            .unwrap();
        assert!(matches!(out.assessment.verdict, Verdict::Comparison { .. }));
        assert_eq!(*seen.lock().unwrap(), vec![2]);
        assert_eq!(p.usage().prompt_tokens, 7);
    }
}
