//! Named, bounded visualization parameters.
//!
//! A [`ParamSpace`] declares what an agent may change on a tool; a
//! [`ParamVector`] is one concrete assignment. Vectors are keyed by name in a
//! `BTreeMap` so serialized output has a stable key order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("parameter `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("categorical parameter `{0}` has no choices")]
    NoChoices(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("missing parameter `{0}`")]
    Missing(String),
    #[error("parameter `{name}` = {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: String,
        lower: f64,
        upper: f64,
    },
    #[error("parameter `{name}` has the wrong type: {detail}")]
    WrongType { name: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Continuous,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub lower: f64,
    #[serde(default)]
    pub upper: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

impl ParamEntry {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Continuous,
            lower,
            upper,
            choices: None,
        }
    }

    pub fn integer(name: impl Into<String>, lower: i64, upper: i64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Integer,
            lower: lower as f64,
            upper: upper as f64,
            choices: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical,
            lower: 0.0,
            upper: 0.0,
            choices: Some(choices.into_iter().map(Into::into).collect()),
        }
    }

    /// Width of the numeric range; zero for categorical entries.
    pub fn span(&self) -> f64 {
        match self.kind {
            ParamKind::Categorical => 0.0,
            _ => self.upper - self.lower,
        }
    }

    fn check(&self, value: &ParamValue) -> Result<(), ParamError> {
        match (self.kind, value) {
            (ParamKind::Categorical, ParamValue::Choice(c)) => {
                let choices = self.choices.as_deref().unwrap_or_default();
                if choices.iter().any(|x| x == c) {
                    Ok(())
                } else {
                    Err(ParamError::WrongType {
                        name: self.name.clone(),
                        detail: format!("`{c}` is not one of {choices:?}"),
                    })
                }
            }
            (ParamKind::Categorical, ParamValue::Number(n)) => Err(ParamError::WrongType {
                name: self.name.clone(),
                detail: format!("expected a choice, got number {n}"),
            }),
            (_, ParamValue::Choice(c)) => Err(ParamError::WrongType {
                name: self.name.clone(),
                detail: format!("expected a number, got `{c}`"),
            }),
            (_, ParamValue::Number(n)) => {
                if !n.is_finite() || *n < self.lower || *n > self.upper {
                    Err(ParamError::OutOfBounds {
                        name: self.name.clone(),
                        value: n.to_string(),
                        lower: self.lower,
                        upper: self.upper,
                    })
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// Ordered set of parameters a tool accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ParamSpace {
    entries: Vec<ParamEntry>,
}

impl ParamSpace {
    pub fn new(entries: Vec<ParamEntry>) -> Result<Self, ParamError> {
        let space = Self { entries };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(ParamError::DuplicateName(e.name.clone()));
            }
            match e.kind {
                ParamKind::Categorical => {
                    if e.choices.as_ref().is_none_or(|c| c.is_empty()) {
                        return Err(ParamError::NoChoices(e.name.clone()));
                    }
                }
                _ => {
                    if e.lower > e.upper || !e.lower.is_finite() || !e.upper.is_finite() {
                        return Err(ParamError::InvertedBounds {
                            name: e.name.clone(),
                            lower: e.lower,
                            upper: e.upper,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Strict check used at tool boundaries: every entry present, nothing
    /// extra, every value in bounds.
    pub fn check(&self, params: &ParamVector) -> Result<(), ParamError> {
        for name in params.values.keys() {
            if self.get(name).is_none() {
                return Err(ParamError::Unknown(name.clone()));
            }
        }
        for e in &self.entries {
            let v = params
                .get(&e.name)
                .ok_or_else(|| ParamError::Missing(e.name.clone()))?;
            e.check(v)?;
        }
        Ok(())
    }

    /// Brings a proposal into the space. Unknown names are dropped, numbers
    /// are clamped (and rounded for integer entries), invalid choices fall
    /// back to the first choice. Missing entries are filled from `fallback`
    /// when given. Every adjustment is reported.
    pub fn clamp(
        &self,
        proposal: &ParamVector,
        fallback: Option<&ParamVector>,
    ) -> (ParamVector, Vec<ClampNote>) {
        let mut out = ParamVector::default();
        let mut notes = Vec::new();
        for name in proposal.values.keys() {
            if self.get(name).is_none() {
                notes.push(ClampNote {
                    name: name.clone(),
                    from: proposal.values[name].clone(),
                    to: None,
                });
            }
        }
        for e in &self.entries {
            let Some(v) = proposal.get(&e.name).or_else(|| fallback.and_then(|f| f.get(&e.name)))
            else {
                continue;
            };
            let fixed = match (e.kind, v) {
                (ParamKind::Categorical, ParamValue::Choice(c))
                    if e.choices.as_deref().unwrap_or_default().contains(c) =>
                {
                    v.clone()
                }
                (ParamKind::Categorical, _) => {
                    ParamValue::Choice(e.choices.as_deref().unwrap_or_default()[0].clone())
                }
                (kind, ParamValue::Number(n)) => {
                    let mut x = if n.is_nan() { e.lower } else { n.clamp(e.lower, e.upper) };
                    if kind == ParamKind::Integer {
                        x = x.round().clamp(e.lower.ceil(), e.upper.floor());
                    }
                    ParamValue::Number(x)
                }
                (_, ParamValue::Choice(c)) => match c.trim().parse::<f64>() {
                    Ok(n) => ParamValue::Number(n.clamp(e.lower, e.upper)),
                    Err(_) => ParamValue::Number(e.lower),
                },
            };
            if &fixed != v {
                notes.push(ClampNote {
                    name: e.name.clone(),
                    from: v.clone(),
                    to: Some(fixed.clone()),
                });
            }
            out.values.insert(e.name.clone(), fixed);
        }
        (out, notes)
    }

    /// Midpoint of every numeric range, first choice of categoricals.
    pub fn center(&self) -> ParamVector {
        let mut v = ParamVector::default();
        for e in &self.entries {
            let value = match e.kind {
                ParamKind::Categorical => {
                    ParamValue::Choice(e.choices.as_deref().unwrap_or_default()[0].clone())
                }
                ParamKind::Integer => ParamValue::Number(((e.lower + e.upper) / 2.0).round()),
                ParamKind::Continuous => ParamValue::Number((e.lower + e.upper) / 2.0),
            };
            v.values.insert(e.name.clone(), value);
        }
        v
    }
}

/// One adjustment made by [`ParamSpace::clamp`]. `to == None` means the
/// parameter was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampNote {
    pub name: String,
    pub from: ParamValue,
    pub to: Option<ParamValue>,
}

impl fmt::Display for ClampNote {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.to {
            Some(to) => write!(f, "clamped {} from {} to {}", self.name, self.from, to),
            None => write!(f, "dropped unknown parameter {}={}", self.name, self.from),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Choice(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Number(n) => Some(*n),
            ParamValue::Choice(_) => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(n) => write!(f, "{n}"),
            ParamValue::Choice(c) => write!(f, "{c}"),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Choice(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ParamVector {
    pub values: BTreeMap<String, ParamValue>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<ParamValue>) -> Self {
        self.values.insert(name.into(), value.into());
        self
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<ParamValue>) {
        self.values.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.values.get(name)
    }

    pub fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(ParamValue::as_f64)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}
