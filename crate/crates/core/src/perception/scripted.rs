//! Scripted stand-ins for a model driving an LLM-centric planner.
//!
//! Both stubs run a coordinate-wise hill climb over the numeric parameters:
//! keep going while frames improve, reverse and halve the step when they do
//! not, and move to the next coordinate once the step drops below a
//! tolerance. [`HillAwareStub`] reads the tool's quality score directly;
//! [`ComparisonStub`] only sees pairwise verdicts from
//! [`oracle_compare_embedding`]. Replies go through the tagged text format
//! and back through the parser, exactly like a model's would.

use super::{
    oracle_compare_embedding, Perceived, Perception, PerceptionError, PerceptionInput, Verdict,
    Winner,
};
use crate::params::{ParamKind, ParamSpace, ParamVector};
use crate::response::{format_response, parse_agent_response, ParsedResponse};
use crate::tool::ToolStats;

/// Tolerance as a fraction of each parameter's span.
pub const DEFAULT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone)]
struct Coord {
    name: String,
    lower: f64,
    upper: f64,
    integer: bool,
    step: f64,
    dir: f64,
    tol: f64,
    done: bool,
}

#[derive(Debug, Clone)]
struct Climber {
    coords: Vec<Coord>,
    active: usize,
    best: Option<(ParamVector, f64)>,
    tolerance: f64,
}

enum Move {
    Propose(ParamVector, String),
    Stop(String),
}

impl Climber {
    fn new(tolerance: f64) -> Self {
        Self {
            coords: Vec::new(),
            active: 0,
            best: None,
            tolerance,
        }
    }

    fn init(&mut self, space: &ParamSpace) {
        if !self.coords.is_empty() {
            return;
        }
        for e in space.entries() {
            if e.kind == ParamKind::Categorical || e.span() <= 0.0 {
                continue;
            }
            let integer = e.kind == ParamKind::Integer;
            self.coords.push(Coord {
                name: e.name.clone(),
                lower: e.lower,
                upper: e.upper,
                integer,
                step: e.span() / 4.0,
                dir: 1.0,
                tol: if integer { 1.0 } else { e.span() * self.tolerance },
                done: false,
            });
        }
    }

    /// `improved` is None on the first frame.
    fn advance(&mut self, current: &ParamVector, score: f64, improved: Option<bool>) -> Move {
        let note;
        match improved {
            None => {
                self.best = Some((current.clone(), score));
                note = "first frame; starting the search".to_string();
            }
            Some(true) => {
                self.best = Some((current.clone(), score));
                note = "better than the best so far; continuing in the same direction".into();
            }
            Some(false) => {
                self.fail_active();
                note = "not better than the best so far; reversing with a smaller step".into();
            }
        }
        let Some((best, _)) = self.best.clone() else {
            unreachable!("best is set on the first frame")
        };
        loop {
            let Some(i) = self.coords.iter().position(|c| !c.done) else {
                if *current == best {
                    return Move::Stop(format!("{note}; all parameters converged"));
                }
                return Move::Propose(best, "returning to the best parameters found".into());
            };
            self.active = i;
            let c = &self.coords[i];
            let base = best.number(&c.name).unwrap_or((c.lower + c.upper) / 2.0);
            let mut next = (base + c.dir * c.step).clamp(c.lower, c.upper);
            if c.integer {
                next = next.round();
            }
            if (next - base).abs() < 1e-12 {
                self.fail_active();
                continue;
            }
            let name = c.name.clone();
            return Move::Propose(best.clone().with(name.clone(), next), format!("{note}; trying {name}={next}"));
        }
    }

    fn fail_active(&mut self) {
        let Some(c) = self.coords.get_mut(self.active) else {
            return;
        };
        c.dir = -c.dir;
        c.step /= 2.0;
        if c.step < c.tol {
            c.done = true;
        }
    }
}

fn reply(reasoning: String, mv: Move) -> Result<Perceived, PerceptionError> {
    let r = match mv {
        Move::Propose(p, plan) => ParsedResponse {
            reasoning,
            plan,
            assessment_label: "continue".into(),
            proposed_params: Some(p),
        },
        Move::Stop(plan) => ParsedResponse {
            reasoning,
            plan,
            assessment_label: "clear".into(),
            proposed_params: None,
        },
    };
    let parsed = parse_agent_response(&format_response(&r))?;
    Ok(Perceived::from_response(parsed))
}

fn embedding_quality(stats: &Option<ToolStats>) -> Result<f64, PerceptionError> {
    match stats {
        Some(ToolStats::Embedding(e)) => Ok(e.quality),
        _ => Err(PerceptionError::MissingStats("embedding")),
    }
}

/// Reads the embedding quality score and climbs it.
#[derive(Debug, Clone)]
pub struct HillAwareStub {
    climber: Climber,
}

impl HillAwareStub {
    pub fn new(tolerance: f64) -> Self {
        Self {
            climber: Climber::new(tolerance),
        }
    }
}

impl Default for HillAwareStub {
    fn default() -> Self {
        Self::new(DEFAULT_TOLERANCE)
    }
}

impl Perception for HillAwareStub {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        self.climber.init(input.space);
        let q = embedding_quality(&input.current.stats)?;
        let improved = self.climber.best.as_ref().map(|(_, b)| q > *b);
        let mv = self.climber.advance(&input.current.params, q, improved);
        reply(format!("cluster separation score {q:.4}"), mv)
    }
}

/// Climbs using only "first better" / "second better" verdicts between the
/// current frame and the best frame it has seen.
#[derive(Debug, Clone)]
pub struct ComparisonStub {
    climber: Climber,
}

impl ComparisonStub {
    pub fn new(tolerance: f64) -> Self {
        Self {
            climber: Climber::new(tolerance),
        }
    }
}

impl Default for ComparisonStub {
    fn default() -> Self {
        Self::new(DEFAULT_TOLERANCE)
    }
}

impl Perception for ComparisonStub {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        self.climber.init(input.space);
        let q = embedding_quality(&input.current.stats)?;
        // The stub keeps the best frame's stats as its own memory of that
        // image; the decision uses only the verdict.
        let (improved, reasoning) = match &self.climber.best {
            None => (None, "first frame".to_string()),
            Some((_, best_q)) => {
                let a = oracle_compare_embedding(q, *best_q);
                let won = matches!(a.verdict, Verdict::Comparison { winner: Winner::First, .. })
                    && q != *best_q;
                (Some(won), format!("current vs best: {}", a.label()))
            }
        };
        let mv = self.climber.advance(&input.current.params, q, improved);
        reply(reasoning, mv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::params::ParamEntry;
    use crate::perception::{EmbeddingStats, Observation};

    fn run(mut p: impl Perception, f: impl Fn(f64) -> f64) -> (f64, usize) {
        let space = ParamSpace::new(vec![ParamEntry::continuous("h", 0.0, 100.0)]).unwrap();
        let png = Image::new(1, 1, [0; 4]).to_png().unwrap();
        let mut params = space.center();
        for i in 0..40 {
            let h = params.number("h").unwrap();
            let obs = Observation {
                step: i,
                params: params.clone(),
                png: png.clone(),
                stats: Some(ToolStats::Embedding(EmbeddingStats {
                    points: vec![],
                    quality: f(h),
                })),
            };
            let out = p
                .perceive(&PerceptionInput {
                    role_prompt: "",
                    context: "",
                    space: &space,
                    current: &obs,
                    baseline: None,
                })
                .unwrap();
            if out.assessment.verdict == Verdict::Clear {
                return (h, i as usize + 1);
            }
            params = out.response.proposed_params.unwrap();
        }
        panic!("did not converge");
    }

    #[test]
    fn hill_aware_finds_peak() {
        let (h, n) = run(HillAwareStub::default(), |h| (-(h - 30.0f64).powi(2) / 400.0).exp());
        assert!((h - 30.0).abs() <= 10.0, "h = {h}");
        assert!(n <= 15, "{n} frames");
    }

    #[test]
    fn comparison_finds_peak() {
        let (h, n) = run(ComparisonStub::default(), |h| (-(h - 72.0f64).powi(2) / 400.0).exp());
        assert!((h - 72.0).abs() <= 10.0, "h = {h}");
        assert!(n <= 15, "{n} frames");
    }

    #[test]
    fn stops_only_at_best() {
        let (h, _) = run(HillAwareStub::default(), |h| -h);
        assert_eq!(h, 0.0);
    }
}
