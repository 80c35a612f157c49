//! Trial execution, transcripts and success-rate reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ava_core::image::{ImageRef, Png};
use ava_core::perception::llm::ChatBackend;
use ava_core::perception::{ChatMessage, ChatRequest};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cases::{gen_case, BenchCase, CaseError, CaseParams, GroundTruth, Task};
use crate::scoring::{ideal_answer, score};

/// Answers a benchmark prompt about a case's images.
pub trait BenchPerception: Send + Sync {
    fn name(&self) -> String;
    fn answer(&self, case: &BenchCase) -> Result<String, String>;
}

/// Reads the case's ground truth and answers in free text.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthStub;

impl BenchPerception for GroundTruthStub {
    fn name(&self) -> String {
        "ground-truth".into()
    }

    fn answer(&self, case: &BenchCase) -> Result<String, String> {
        Ok(ideal_answer(&case.ground_truth))
    }
}

/// Gives the same answer to every case.
#[derive(Debug, Clone)]
pub struct FixedAnswer(pub String);

impl BenchPerception for FixedAnswer {
    fn name(&self) -> String {
        format!("fixed({})", self.0)
    }

    fn answer(&self, _case: &BenchCase) -> Result<String, String> {
        Ok(self.0.clone())
    }
}

/// Sends the prompt and images to a vision chat model.
pub struct ModelPerception {
    pub backend: Box<dyn ChatBackend>,
    pub label: String,
}

impl BenchPerception for ModelPerception {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn answer(&self, case: &BenchCase) -> Result<String, String> {
        let request = ChatRequest {
            messages: vec![ChatMessage::user(case.prompt.clone(), case.images.clone())],
            model: None,
            max_tokens: None,
        };
        self.backend
            .chat_complete(&request)
            .map(|r| r.text)
            .map_err(|e| e.to_string())
    }
}

/// One trial as stored on disk. Scoring needs only this record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub task: Task,
    pub seed: u64,
    pub params: CaseParams,
    pub prompt: String,
    pub images: Vec<ImageRef>,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub success: bool,
}

impl Transcript {
    /// Recomputes success from the stored answer.
    pub fn rescored(&self) -> bool {
        self.answer
            .as_deref()
            .is_some_and(|a| score(self.task, &self.ground_truth, a))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub transcript: Transcript,
    pub images: Vec<Png>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: Task,
    pub trials: u32,
    pub successes: u32,
    pub success_rate: f64,
}

impl ReportRow {
    pub fn new(task: Task, trials: u32, successes: u32) -> Self {
        Self {
            task,
            trials,
            successes,
            success_rate: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub perception: String,
    pub rows: Vec<ReportRow>,
}

pub const DEFAULT_TRIALS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub base_seed: u64,
    pub params: CaseParams,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            base_seed: 0,
            params: CaseParams::default(),
        }
    }
}

/// Runs `trials` cases with seeds `base_seed..base_seed + trials`.
/// Perception failures count as failed trials; generation errors abort.
pub fn run_benchmark(
    task: Task,
    trials: u32,
    perception: &dyn BenchPerception,
    options: &RunOptions,
) -> Result<(ReportRow, Vec<Trial>), CaseError> {
    if trials == 0 {
        return Err(CaseError::BadParams("trials must be at least 1".into()));
    }
    let results: Vec<Result<Trial, CaseError>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let case = gen_case(task, options.base_seed + i, &options.params)?;
            let (answer, error) = match perception.answer(&case) {
                Ok(a) => (Some(a), None),
                Err(e) => {
                    tracing::warn!(%task, seed = case.seed, "perception failed: {e}");
                    (None, Some(e))
                }
            };
            let mut transcript = Transcript {
                task,
                seed: case.seed,
                params: case.params.clone(),
                prompt: case.prompt.clone(),
                images: case.images.iter().map(Png::hash).collect(),
                ground_truth: case.ground_truth.clone(),
                answer,
                error,
                success: false,
            };
            transcript.success = transcript.rescored();
            Ok(Trial {
                transcript,
                images: case.images,
            })
        })
        .collect();
    let trials_out = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let successes = trials_out.iter().filter(|t| t.transcript.success).count() as u32;
    Ok((ReportRow::new(task, trials, successes), trials_out))
}

impl BenchReport {
    /// Folds transcripts into rows ordered by task. Success is recomputed
    /// from the answers, so a stored transcript set always yields the same
    /// report.
    pub fn from_transcripts(perception: impl Into<String>, transcripts: &[Transcript]) -> Self {
        let mut tally: BTreeMap<Task, (u32, u32)> = BTreeMap::new();
        for t in transcripts {
            let e = tally.entry(t.task).or_default();
            e.0 += 1;
            e.1 += u32::from(t.rescored());
        }
        Self {
            perception: perception.into(),
            rows: tally.into_iter().map(|(task, (n, s))| ReportRow::new(task, n, s)).collect(),
        }
    }

    /// Builds a report from success rates over `trials` trials each.
    pub fn from_rates(perception: impl Into<String>, trials: u32, rates: &[(Task, f64)]) -> Self {
        Self {
            perception: perception.into(),
            rows: rates
                .iter()
                .map(|&(task, r)| ReportRow::new(task, trials, (r * trials as f64).round() as u32))
                .collect(),
        }
    }

    pub fn row(&self, task: Task) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.task == task)
    }

    fn cell(&self, task: Option<Task>) -> String {
        match task.and_then(|t| self.row(t)) {
            Some(r) => format!("{:.0}%", r.success_rate * 100.0),
            None => "-".into(),
        }
    }

    /// Scatter plot and parallel coordinate success rates by task.
    pub fn chart_table(&self) -> String {
        let rows: [(&str, Option<Task>, Option<Task>); 5] = [
            ("cluster", Some(Task::ScatterCluster), None),
            ("cluster count", Some(Task::ScatterClusterCount), Some(Task::PcClusterCount)),
            ("outlier", Some(Task::ScatterOutlier), None),
            ("outlier count", Some(Task::ScatterOutlierCount), Some(Task::PcOutlierCount)),
            ("correlation", Some(Task::ScatterCorrelation), Some(Task::PcCorrelation)),
        ];
        let header = ["Tasks", "scatter plot(success rate)", "parallel coordinates"];
        let body: Vec<[String; 3]> = rows
            .iter()
            .map(|(name, s, p)| [name.to_string(), self.cell(*s), self.cell(*p)])
            .collect();
        grid(&header.map(String::from), &body)
    }

    /// Graph task success rates in one row.
    pub fn graph_table(&self) -> String {
        let tasks = [Task::GraphNodeCount, Task::GraphFindNode, Task::GraphConnection, Task::GraphNeighbor];
        let header = ["Tasks", "node count", "find node", "connection", "neighbor"].map(String::from);
        let mut row = [String::from("success %"), String::new(), String::new(), String::new(), String::new()];
        for (i, t) in tasks.into_iter().enumerate() {
            row[i + 1] = self.cell(Some(t));
        }
        grid(&header, &[row])
    }

    /// Every row with raw counts.
    pub fn detail_table(&self) -> String {
        let header = ["task", "trials", "successes", "success rate"].map(String::from);
        let body: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.task.name().to_string(),
                    r.trials.to_string(),
                    r.successes.to_string(),
                    format!("{:.2}", r.success_rate),
                ]
            })
            .collect();
        grid(&header, &body)
    }

    pub fn render_text(&self) -> String {
        format!(
            "perception: {}\n\n{}\n{}\n{}",
            self.perception,
            self.chart_table(),
            self.graph_table(),
            self.detail_table()
        )
    }
}

fn grid<const N: usize>(header: &[String; N], body: &[[String; N]]) -> String {
    let mut widths: [usize; N] = std::array::from_fn(|i| header[i].chars().count());
    for row in body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; N]| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        format!("| {} |", parts.join(" | "))
    };
    let rule = format!("|{}|", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(out, "{rule}");
    for row in body {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}
