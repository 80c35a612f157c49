//! Visual perception: turning a rendered image (and any side-channel stats)
//! into an [`Assessment`].
//!
//! Two families implement [`Perception`]: deterministic oracles that read
//! ground-truth stats from the tool, and [`llm::LlmPerception`] which sends
//! the image to a vision chat model.

pub mod chat;
pub mod llm;
pub mod oracle;
pub mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image::Png;
use crate::params::{ParamSpace, ParamVector};
use crate::response::{ParsedResponse, ResponseError};
use crate::tool::ToolStats;

pub use chat::{ChatClient, ChatConfig, ChatError, ChatMessage, ChatRequest, ChatResponse};
pub use llm::{llm_assess, LlmPerception};
pub use scripted::{ComparisonStub, HillAwareStub};
pub use oracle::{
    oracle_assess_volume, oracle_compare_embedding, oracle_compare_scatter, ScatterOracle,
    ScatterThresholds, VolumeOracle, VolumeThresholds,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    NotRecognizable,
    Recognizable,
    Clear,
    Comparison { winner: Winner, too_low: bool },
    Answer { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl Assessment {
    pub fn new(verdict: Verdict) -> Self {
        Self { verdict, confidence: None }
    }

    pub fn not_recognizable() -> Self {
        Self::new(Verdict::NotRecognizable)
    }

    pub fn recognizable() -> Self {
        Self::new(Verdict::Recognizable)
    }

    pub fn clear() -> Self {
        Self::new(Verdict::Clear)
    }

    pub fn comparison(winner: Winner, too_low: bool) -> Self {
        Self::new(Verdict::Comparison { winner, too_low })
    }

    pub fn answer(text: impl Into<String>) -> Self {
        Self::new(Verdict::Answer { text: text.into() })
    }

    /// Order used when picking the best record from memory:
    /// clear > recognizable > not recognizable > anything else.
    pub fn rank(&self) -> u8 {
        match self.verdict {
            Verdict::Clear => 3,
            Verdict::Recognizable => 2,
            Verdict::NotRecognizable => 1,
            _ => 0,
        }
    }

    pub fn is_volume_verdict(&self) -> bool {
        matches!(
            self.verdict,
            Verdict::Clear | Verdict::Recognizable | Verdict::NotRecognizable
        )
    }

    /// Text label as written in tagged responses.
    pub fn label(&self) -> String {
        match &self.verdict {
            Verdict::NotRecognizable => "not recognizable".into(),
            Verdict::Recognizable => "recognizable".into(),
            Verdict::Clear => "clear".into(),
            Verdict::Comparison { winner, too_low } => {
                let w = match winner {
                    Winner::First => "first",
                    Winner::Second => "second",
                };
                if *too_low {
                    format!("{w} better, other too low")
                } else {
                    format!("{w} better")
                }
            }
            Verdict::Answer { text } => text.clone(),
        }
    }

    /// Interprets a model's free-text label. Unrecognized labels become
    /// [`Verdict::Answer`].
    pub fn from_label(label: &str) -> Self {
        let norm: String = label
            .to_ascii_lowercase()
            .replace("recognisable", "recognizable")
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { ' ' })
            .collect();
        let words: Vec<&str> = norm.split_whitespace().collect();
        let has = |w: &str| words.contains(&w);
        let verdict = if words.first() == Some(&"clear") || norm.trim() == "clear" {
            Verdict::Clear
        } else if has("recognizable")
            && (has("not") || has("unrecognizable") || has("non"))
            || has("unrecognizable")
        {
            Verdict::NotRecognizable
        } else if has("recognizable") {
            Verdict::Recognizable
        } else if (has("first") || has("second")) && (has("better") || has("winner")) {
            let first_pos = words.iter().position(|w| *w == "first");
            let second_pos = words.iter().position(|w| *w == "second");
            let winner = match (first_pos, second_pos) {
                (Some(a), Some(b)) if b < a => Winner::Second,
                (None, Some(_)) => Winner::Second,
                _ => Winner::First,
            };
            Verdict::Comparison {
                winner,
                too_low: norm.contains("too low"),
            }
        } else {
            Verdict::Answer { text: label.trim().to_string() }
        };
        Assessment::new(verdict)
    }
}

impl fmt::Display for Assessment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Per-structure measurements from a volume render. See the renderer for
/// the exact definitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StructureStat {
    /// Fraction of the structure's projected silhouette pixels where the
    /// structure contributes any opacity.
    pub silhouette_coverage: f64,
    /// Mean over contributing pixels of the structure's composited alpha.
    pub mean_share: f64,
    /// Mean over silhouette pixels of the alpha contributed by everything else.
    pub occluder_share: f64,
    pub silhouette_pixels: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OverplotMetrics {
    pub saturated_fraction: f64,
    pub faintness: f64,
    pub covered_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EmbeddingStats {
    pub points: Vec<[f64; 2]>,
    /// Cluster separation measured by the tool against its own labels.
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub requests: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.requests += other.requests;
    }
}

/// One rendered frame the agent has seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub step: u32,
    pub params: ParamVector,
    pub png: Png,
    pub stats: Option<ToolStats>,
}

pub struct PerceptionInput<'a> {
    pub role_prompt: &'a str,
    /// Rendered memory context (previous steps) for language models.
    pub context: &'a str,
    pub space: &'a ParamSpace,
    pub current: &'a Observation,
    /// Earlier frame to compare against, when the planner asks for one. The
    /// current frame is always "first".
    pub baseline: Option<&'a Observation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Perceived {
    pub assessment: Assessment,
    pub response: ParsedResponse,
}

impl Perceived {
    pub fn from_response(response: ParsedResponse) -> Self {
        Self {
            assessment: Assessment::from_label(&response.assessment_label),
            response,
        }
    }

    pub fn from_assessment(assessment: Assessment, reasoning: impl Into<String>) -> Self {
        Self {
            response: ParsedResponse {
                reasoning: reasoning.into(),
                plan: String::new(),
                assessment_label: assessment.label(),
                proposed_params: None,
            },
            assessment,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("unknown structure `{0}`")]
    UnknownStructure(String),
    #[error("tool returned no {0} stats; oracle perception needs them")]
    MissingStats(&'static str),
    #[error("{0}")]
    Response(#[from] ResponseError),
    #[error("chat: {0}")]
    Chat(#[from] ChatError),
    #[error("between 1 and {max} images per request, got {got}")]
    ImageCount { got: usize, max: usize },
    #[error("{0}")]
    Other(String),
}

pub trait Perception: Send {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError>;

    fn usage(&self) -> TokenUsage {
        TokenUsage::default()
    }
}

impl<P: Perception + ?Sized> Perception for Box<P> {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        (**self).perceive(input)
    }

    fn usage(&self) -> TokenUsage {
        (**self).usage()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_round_trip() {
        for a in [
            Assessment::not_recognizable(),
            Assessment::recognizable(),
            Assessment::clear(),
            Assessment::comparison(Winner::First, false),
            Assessment::comparison(Winner::Second, true),
            Assessment::answer("3 clusters"),
        ] {
            assert_eq!(Assessment::from_label(&a.label()), a, "{}", a.label());
        }
    }

    #[test]
    fn free_text_labels() {
        assert_eq!(Assessment::from_label("'Not recognizable'").verdict, Verdict::NotRecognizable);
        assert_eq!(Assessment::from_label("Recognisable.").verdict, Verdict::Recognizable);
        assert_eq!(Assessment::from_label("Clear").verdict, Verdict::Clear);
        assert_eq!(Assessment::from_label("unrecognizable").verdict, Verdict::NotRecognizable);
    }

    #[test]
    fn serde_shape() {
        let a = Assessment::comparison(Winner::Second, true);
        let json = serde_json::to_value(&a).unwrap();
        assert_eq!(json, serde_json::json!({"kind": "comparison", "winner": "second", "too_low": true}));
        assert_eq!(serde_json::from_value::<Assessment>(json).unwrap(), a);
    }
}
