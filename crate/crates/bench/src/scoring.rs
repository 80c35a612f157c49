//! Pure answer extraction and scoring against ground truth.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::cases::{GroundTruth, Task};

static INTEGER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());
static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
static NODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bN(\d+)\b").unwrap());
static FIRST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(first|1st|left)\b|\b(image|plot|picture|figure)\s*(1|one)\b").unwrap());
static SECOND: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(second|2nd|right)\b|\b(image|plot|picture|figure)\s*(2|two)\b").unwrap());
static BOTH_LOW: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(both|neither)\b[^.]*\b(low|weak|little|no)\b|\bneither\b").unwrap()
});

/// Leniency bound: when both coefficients are at or below this, answering
/// that both are low counts as correct.
pub const BOTH_LOW_MAX: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationChoice {
    First,
    Second,
    BothLow,
}

/// First run of ASCII digits in the text.
pub fn first_integer(text: &str) -> Option<u64> {
    INTEGER.find(text).and_then(|m| m.as_str().parse().ok())
}

/// The first standalone "yes" or "no".
pub fn yes_no(text: &str) -> Option<bool> {
    YES_NO
        .captures(text)
        .map(|c| c[1].eq_ignore_ascii_case("yes"))
}

/// Recognition answers: yes/no, else a positive count means yes.
pub fn presence(text: &str) -> Option<bool> {
    yes_no(text).or_else(|| first_integer(text).map(|n| n > 0))
}

/// "Not recognizable" / "Recognizable", falling back to yes/no.
pub fn recognizable(text: &str) -> Option<bool> {
    let t = text.to_ascii_lowercase().replace("recognisable", "recognizable");
    if t.contains("not recognizable") || t.contains("unrecognizable") {
        Some(false)
    } else if t.contains("recognizable") {
        Some(true)
    } else {
        yes_no(text)
    }
}

/// "Both low" wins if stated; otherwise whichever plot is mentioned first.
pub fn correlation_choice(text: &str) -> Option<CorrelationChoice> {
    if BOTH_LOW.is_match(text) {
        return Some(CorrelationChoice::BothLow);
    }
    let first = FIRST.find(text).map(|m| m.start());
    let second = SECOND.find(text).map(|m| m.start());
    match (first, second) {
        (Some(a), Some(b)) if b < a => Some(CorrelationChoice::Second),
        (Some(_), _) => Some(CorrelationChoice::First),
        (None, Some(_)) => Some(CorrelationChoice::Second),
        (None, None) => None,
    }
}

/// Node names (`N<digits>`) in the text, normalized to upper case.
pub fn node_names(text: &str) -> BTreeSet<String> {
    NODE.captures_iter(text).map(|c| format!("N{}", &c[1])).collect()
}

/// Whether `answer` is correct for `truth`.
pub fn score(task: Task, truth: &GroundTruth, answer: &str) -> bool {
    match truth {
        GroundTruth::Count { value } => first_integer(answer) == Some(*value as u64),
        GroundTruth::YesNo { value } => {
            let got = match task {
                Task::VolumeRecognizable => recognizable(answer),
                Task::ScatterCluster | Task::ScatterOutlier => presence(answer),
                _ => yes_no(answer),
            };
            got == Some(*value)
        }
        GroundTruth::Correlation { first, second } => match correlation_choice(answer) {
            Some(CorrelationChoice::First) => first > second,
            Some(CorrelationChoice::Second) => second > first,
            Some(CorrelationChoice::BothLow) => *first <= BOTH_LOW_MAX && *second <= BOTH_LOW_MAX,
            None => false,
        },
        GroundTruth::Neighbors { node, neighbors } => {
            let mut named = node_names(answer);
            named.remove(node);
            &named == neighbors
        }
    }
}

/// An answer a perfect reader would give, in the same free-text style a
/// model uses.
pub fn ideal_answer(truth: &GroundTruth) -> String {
    match truth {
        GroundTruth::Count { value } => format!("There are {value} in this visualization."),
        GroundTruth::YesNo { value: true } => "Yes.".into(),
        GroundTruth::YesNo { value: false } => "No.".into(),
        GroundTruth::Correlation { first, second } => {
            if *first <= BOTH_LOW_MAX && *second <= BOTH_LOW_MAX {
                "Both plots have a low correlation.".into()
            } else if first > second {
                "The first image has a higher correlation.".into()
            } else {
                "The second image has a higher correlation.".into()
            }
        }
        GroundTruth::Neighbors { node, neighbors } => {
            if neighbors.is_empty() {
                format!("Node {node} has no neighbors.")
            } else {
                let list: Vec<&str> = neighbors.iter().map(String::as_str).collect();
                format!("The neighbors of {node} are {}.", list.join(", "))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extractors() {
        assert_eq!(first_integer("Yes, there are 3 clusters (maybe 4)."), Some(3));
        assert_eq!(first_integer("three"), None);
        assert_eq!(yes_no("Nope. No outliers."), Some(false));
        assert_eq!(yes_no("Yes, 2."), Some(true));
        assert_eq!(presence("I count 4 clusters"), Some(true));
        assert_eq!(recognizable("Not recognizable"), Some(false));
        assert_eq!(recognizable("'Recognizable'"), Some(true));
        assert_eq!(correlation_choice("The second image has a high correlation, the first not."), Some(CorrelationChoice::Second));
        assert_eq!(correlation_choice("Image 1."), Some(CorrelationChoice::First));
        assert_eq!(correlation_choice("Both images show low correlation."), Some(CorrelationChoice::BothLow));
        assert_eq!(node_names("n3 and N7, plus N3"), BTreeSet::from(["N3".to_string(), "N7".to_string()]));
    }

    #[test]
    fn leniency_only_when_both_low() {
        let low = GroundTruth::Correlation { first: 0.1, second: 0.2 };
        let mixed = GroundTruth::Correlation { first: 0.1, second: 0.3 };
        let answer = "Both have low correlation";
        assert!(score(Task::ScatterCorrelation, &low, answer));
        assert!(!score(Task::ScatterCorrelation, &mixed, answer));
        assert!(score(Task::ScatterCorrelation, &low, "the second"));
        assert!(!score(Task::ScatterCorrelation, &low, "the first"));
    }

    #[test]
    fn neighbor_sets() {
        let t = GroundTruth::Neighbors {
            node: "N2".into(),
            neighbors: BTreeSet::from(["N3".to_string(), "N5".to_string()]),
        };
        assert!(score(Task::GraphNeighbor, &t, "The neighbors of N2 are N5 and N3."));
        assert!(!score(Task::GraphNeighbor, &t, "N3"));
    }

    #[test]
    fn ideal_answers_score() {
        let truths = [
            (Task::ScatterClusterCount, GroundTruth::Count { value: 7 }),
            (Task::GraphFindNode, GroundTruth::YesNo { value: false }),
            (Task::VolumeRecognizable, GroundTruth::YesNo { value: true }),
            (Task::ScatterCorrelation, GroundTruth::Correlation { first: 0.4, second: 0.9 }),
            (Task::ScatterCorrelation, GroundTruth::Correlation { first: 0.2, second: 0.1 }),
            (
                Task::GraphNeighbor,
                GroundTruth::Neighbors {
                    node: "N0".into(),
                    neighbors: BTreeSet::new(),
                },
            ),
        ];
        for (task, t) in truths {
            assert!(score(task, &t, &ideal_answer(&t)), "{t:?}");
        }
    }
}
