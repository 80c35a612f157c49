//! Deterministic perception from ground-truth side channels.
//!
//! These stand in for a vision model's judgments so that agent loops can be
//! run and checked without one. Thresholds are configuration, not truths.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    Assessment, OverplotMetrics, Perceived, Perception, PerceptionError, PerceptionInput,
    StructureStat, Winner,
};
use crate::tool::ToolStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeThresholds {
    pub t_clear: f64,
    pub t_rec: f64,
    pub c_min: f64,
}

impl Default for VolumeThresholds {
    fn default() -> Self {
        Self {
            t_clear: 0.7,
            t_rec: 0.25,
            c_min: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterThresholds {
    pub t_faint: f64,
}

impl Default for ScatterThresholds {
    fn default() -> Self {
        Self { t_faint: 0.1 }
    }
}

pub fn oracle_assess_volume(
    stats: &BTreeMap<String, StructureStat>,
    target: &str,
    th: &VolumeThresholds,
) -> Result<Assessment, PerceptionError> {
    let s = stats
        .get(target)
        .ok_or_else(|| PerceptionError::UnknownStructure(target.to_string()))?;
    let covered = s.silhouette_coverage >= th.c_min;
    Ok(if covered && s.mean_share >= th.t_clear {
        Assessment::clear()
    } else if covered && s.mean_share >= th.t_rec {
        Assessment::recognizable()
    } else {
        Assessment::not_recognizable()
    })
}

/// Pairwise overplotting judgment. A candidate is too low when its
/// faintness is under `t_faint`. Among acceptable candidates the less
/// saturated wins. On a tie the denser candidate wins when neither has
/// saturated pixels and the fainter one wins otherwise, then higher covered
/// fraction, then `a`. `too_low` is set when a too-low candidate
/// took part.
pub fn oracle_compare_scatter(
    a: &OverplotMetrics,
    b: &OverplotMetrics,
    th: &ScatterThresholds,
) -> Assessment {
    let a_low = a.faintness < th.t_faint;
    let b_low = b.faintness < th.t_faint;
    let key = |m: &OverplotMetrics| {
        let density = if m.saturated_fraction > 0.0 { m.faintness } else { -m.faintness };
        (m.saturated_fraction, density, -m.covered_fraction)
    };
    let prefer_b = |a: &OverplotMetrics, b: &OverplotMetrics| key(b) < key(a);
    match (a_low, b_low) {
        (false, false) => {
            let winner = if prefer_b(a, b) { Winner::Second } else { Winner::First };
            Assessment::comparison(winner, false)
        }
        (true, false) => Assessment::comparison(Winner::Second, true),
        (false, true) => Assessment::comparison(Winner::First, true),
        (true, true) => {
            let winner = if (b.faintness, b.covered_fraction, -b.saturated_fraction)
                > (a.faintness, a.covered_fraction, -a.saturated_fraction)
            {
                Winner::Second
            } else {
                Winner::First
            };
            Assessment::comparison(winner, true)
        }
    }
}

/// Higher embedding quality wins; ties go to the first.
pub fn oracle_compare_embedding(a_quality: f64, b_quality: f64) -> Assessment {
    let winner = if b_quality > a_quality { Winner::Second } else { Winner::First };
    Assessment::comparison(winner, false)
}

/// Judges recognizability of one named structure from volume stats.
#[derive(Debug, Clone)]
pub struct VolumeOracle {
    pub target: String,
    pub thresholds: VolumeThresholds,
}

impl VolumeOracle {
    pub fn new(target: impl Into<String>) -> Self {
        Self {
            target: target.into(),
            thresholds: VolumeThresholds::default(),
        }
    }
}

impl Perception for VolumeOracle {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        let Some(ToolStats::Volume { structures }) = &input.current.stats else {
            return Err(PerceptionError::MissingStats("volume"));
        };
        let assessment = oracle_assess_volume(structures, &self.target, &self.thresholds)?;
        let s = &structures[&self.target];
        let reasoning = format!(
            "{}: share {:.3}, silhouette coverage {:.3}, occluders {:.3}",
            self.target, s.mean_share, s.silhouette_coverage, s.occluder_share
        );
        Ok(Perceived::from_assessment(assessment, reasoning))
    }
}

/// Compares the current scatterplot against the baseline frame. Without a
/// baseline it only reports the metrics.
#[derive(Debug, Clone, Default)]
pub struct ScatterOracle {
    pub thresholds: ScatterThresholds,
}

fn scatter_metrics(stats: &Option<ToolStats>) -> Result<&OverplotMetrics, PerceptionError> {
    match stats {
        Some(ToolStats::Scatter(m)) => Ok(m),
        _ => Err(PerceptionError::MissingStats("scatter")),
    }
}

impl Perception for ScatterOracle {
    fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
        let current = scatter_metrics(&input.current.stats)?;
        let describe = |m: &OverplotMetrics| {
            format!(
                "saturated {:.3}, faintness {:.3}, covered {:.3}",
                m.saturated_fraction, m.faintness, m.covered_fraction
            )
        };
        let Some(baseline) = input.baseline else {
            let text = format!("baseline frame: {}", describe(current));
            return Ok(Perceived::from_assessment(Assessment::answer("baseline"), text));
        };
        let reference = scatter_metrics(&baseline.stats)?;
        let assessment = oracle_compare_scatter(current, reference, &self.thresholds);
        let reasoning = format!("first: {}; second: {}", describe(current), describe(reference));
        Ok(Perceived::from_assessment(assessment, reasoning))
    }
}
