//! Seeded benchmark cases: an image (or two), a prompt and the exact answer.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ava_core::image::{Image, Png};
use ava_core::params::ParamVector;
use ava_core::perception::{oracle_assess_volume, Verdict, VolumeThresholds};
use ava_core::tool::{ToolStats, VisTool};
use ava_proto::VolumeTool;
use ava_render::charts::{fr_layout, render_node_link, render_parallel_coords, render_scatter, Canvas, Graph, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::phantom::{gen_volume_phantom, PhantomSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseError {
    #[error("bad case parameters: {0}")]
    BadParams(String),
    #[error("case generation failed: {0}")]
    Generation(String),
}

fn bad(msg: impl Into<String>) -> CaseError {
    CaseError::BadParams(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    ScatterCluster,
    ScatterClusterCount,
    ScatterOutlier,
    ScatterOutlierCount,
    ScatterCorrelation,
    PcClusterCount,
    PcOutlierCount,
    PcCorrelation,
    GraphNodeCount,
    GraphFindNode,
    GraphConnection,
    GraphNeighbor,
    VolumeRecognizable,
}

impl Task {
    pub const ALL: [Task; 13] = [
        Task::ScatterCluster,
        Task::ScatterClusterCount,
        Task::ScatterOutlier,
        Task::ScatterOutlierCount,
        Task::ScatterCorrelation,
        Task::PcClusterCount,
        Task::PcOutlierCount,
        Task::PcCorrelation,
        Task::GraphNodeCount,
        Task::GraphFindNode,
        Task::GraphConnection,
        Task::GraphNeighbor,
        Task::VolumeRecognizable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::ScatterCluster => "scatter_cluster",
            Task::ScatterClusterCount => "scatter_cluster_count",
            Task::ScatterOutlier => "scatter_outlier",
            Task::ScatterOutlierCount => "scatter_outlier_count",
            Task::ScatterCorrelation => "scatter_correlation",
            Task::PcClusterCount => "pc_cluster_count",
            Task::PcOutlierCount => "pc_outlier_count",
            Task::PcCorrelation => "pc_correlation",
            Task::GraphNodeCount => "graph_node_count",
            Task::GraphFindNode => "graph_find_node",
            Task::GraphConnection => "graph_connection",
            Task::GraphNeighbor => "graph_neighbor",
            Task::VolumeRecognizable => "volume_recognizable",
        }
    }

    /// Tasks sharing a family draw identical images for the same seed.
    fn family(self) -> u64 {
        match self {
            Task::ScatterCluster | Task::ScatterClusterCount => 1,
            Task::ScatterOutlier | Task::ScatterOutlierCount => 2,
            Task::ScatterCorrelation => 3,
            Task::PcClusterCount => 4,
            Task::PcOutlierCount => 5,
            Task::PcCorrelation => 6,
            Task::GraphNodeCount | Task::GraphFindNode | Task::GraphConnection | Task::GraphNeighbor => 7,
            Task::VolumeRecognizable => 8,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| bad(format!("unknown task `{s}`")))
    }
}

/// Optional overrides; anything unset is drawn from the seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clusters: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outliers: Option<u32>,
    /// Nominal coefficients of the first and second plot.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<(f64, f64)>,
    /// Multiplies the cluster standard deviation; values above 1 make
    /// clusters bleed into each other.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_opacity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Count { value: u32 },
    YesNo { value: bool },
    Correlation { first: f64, second: f64 },
    Neighbors { node: String, neighbors: BTreeSet<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub task: Task,
    pub seed: u64,
    /// Parameters as used, with every drawn value filled in.
    pub params: CaseParams,
    pub images: Vec<Png>,
    pub ground_truth: GroundTruth,
    pub prompt: String,
}

pub const POINTS: usize = 500;
pub const PC_DIMS: usize = 5;
pub const GRAPH_NODES: usize = 10;
pub const EDGE_PROBABILITY: f64 = 0.2;
pub const LAYOUT_ITERATIONS: u32 = 200;
pub const CLUSTER_SIGMA: f64 = 0.025;
pub const COEFFICIENTS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
pub const PEAK_OPACITIES: [f64; 4] = [0.05, 0.2, 0.4, 0.9];
pub const VOLUME_TARGET: &str = "inner";

const SCATTER_CLUSTER_PROMPT: &str = "You are a scatter plot visualization expert. Is there any cluster in this visualization? Can you tell me how many clusters are in this visualization?";
const SCATTER_OUTLIER_PROMPT: &str = "You are a scatter plot visualization expert. Is there any outlier in this visualization? Can you tell me how many outliers are in this visualization?";
const SCATTER_CORRELATION_PROMPT: &str = "You are a scatter plot visualization expert. which images have a high correlation?";
const PC_CLUSTER_PROMPT: &str = "You are a parallel coordinate visualization expert. Is there any cluster in this visualization? Can you tell me how many clusters are in this visualization?";
const PC_OUTLIER_PROMPT: &str = "You are a parallel coordinate visualization expert. Is there any outlier in this visualization? Can you tell me how many outliers are in this visualization?";
const PC_CORRELATION_PROMPT: &str = "You are a parallel coordinate visualization expert. Is there any correlation between these variables?";
const GRAPH_COUNT_PROMPT: &str = "You are a graph visualization expert. How many nodes are in this visualization?";
const VOLUME_PROMPT: &str = "You are provided with several screenshots showing a volume rendering of the same CT data, for each image assess whether you can recognize the structure of interest, {structure}. Only assess for the structure of interest and not any other structures you can recognize in the screenshot. Use only one of these options for assessment: 'Not recognizable', and 'Recognizable'. 'Not recognizable' means that the structure of interest cannot be identified in the image, even if another structure is recognizable.  'Recognizable' implies that both the structure of interest and its shape can be discerned in the screenshot.";

fn graph_find_prompt(name: &str) -> String {
    format!("You are a graph visualization expert. Is there a node named {name} in this visualization?")
}

fn graph_path_prompt(a: &str, b: &str) -> String {
    format!("You are a graph visualization expert. Is there a path from node {a} to node {b}?")
}

fn graph_neighbor_prompt(a: &str) -> String {
    format!("You are a graph visualization expert. What is the neighbor node of node {a}?")
}

pub fn node_name(i: usize) -> String {
    format!("N{i}")
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Gaussian sample cut off at three standard deviations.
fn truncated(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v = gauss(rng);
        if v.abs() <= 3.0 {
            return v;
        }
    }
}

fn encode(img: &Image) -> Result<Png, CaseError> {
    img.to_png().map_err(|e| CaseError::Generation(e.to_string()))
}

fn unit_canvas() -> Canvas {
    Canvas {
        bounds: Some([0.0, 1.0, 0.0, 1.0]),
        ..Default::default()
    }
}

fn scatter_png(points: Vec<[f64; 2]>, canvas: &Canvas) -> Result<Png, CaseError> {
    let (img, _) = render_scatter(&PointSet::new(points), 1.0, canvas).map_err(|e| CaseError::Generation(e.to_string()))?;
    encode(&img)
}

/// Draws `k` centres in `[lo, hi]^d` with pairwise Chebyshev distance at
/// least `min_dist`, restarting on dead ends.
fn separated_centers(rng: &mut ChaCha8Rng, k: usize, d: usize, lo: f64, hi: f64, min_dist: f64) -> Result<Vec<Vec<f64>>, CaseError> {
    for _ in 0..1000 {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut tries = 0;
        while centers.len() < k && tries < 2000 {
            tries += 1;
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(lo..hi)).collect();
            let far = centers
                .iter()
                .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) >= min_dist);
            if far {
                centers.push(c);
            }
        }
        if centers.len() == k {
            return Ok(centers);
        }
    }
    Err(CaseError::Generation(format!("cannot place {k} separated centres")))
}

fn split(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| total / k + usize::from(i < total % k)).collect()
}

fn check_range(name: &str, v: u32, lo: u32, hi: u32) -> Result<u32, CaseError> {
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(bad(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

/// Generates the case for `task` and `seed`. The same inputs always give
/// byte-identical images.
pub fn gen_case(task: Task, seed: u64, params: &CaseParams) -> Result<BenchCase, CaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task.family());
    let mut p = params.clone();
    let points = p.points.unwrap_or(POINTS);
    if points < 20 {
        return Err(bad(format!("points = {points}; need at least 20")));
    }
    let spread = p.spread.unwrap_or(1.0);
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(bad(format!("spread = {spread} must be positive")));
    }
    let (images, ground_truth, prompt) = match task {
        Task::ScatterCluster | Task::ScatterClusterCount => {
            let k = check_range("clusters", p.clusters.unwrap_or_else(|| rng.random_range(2..=10)), 2, 10)?;
            p.clusters = Some(k);
            let centers = separated_centers(&mut rng, k as usize, 2, 0.12, 0.88, 8.0 * CLUSTER_SIGMA)?;
            let sigma = CLUSTER_SIGMA * spread;
            let mut pts = Vec::with_capacity(points);
            for (c, n) in centers.iter().zip(split(points, k as usize)) {
                for _ in 0..n {
                    pts.push([c[0] + sigma * truncated(&mut rng), c[1] + sigma * truncated(&mut rng)]);
                }
            }
            let gt = if task == Task::ScatterCluster {
                GroundTruth::YesNo { value: true }
            } else {
                GroundTruth::Count { value: k }
            };
            (vec![scatter_png(pts, &unit_canvas())?], gt, SCATTER_CLUSTER_PROMPT.to_string())
        }
        Task::ScatterOutlier | Task::ScatterOutlierCount => {
            let m = check_range("outliers", p.outliers.unwrap_or_else(|| rng.random_range(1..=5)), 1, 5)?;
            p.outliers = Some(m);
            let sigma = 0.08 * spread;
            let mut pts: Vec<[f64; 2]> = (0..points - m as usize)
                .map(|_| [0.5 + sigma * truncated(&mut rng), 0.5 + sigma * truncated(&mut rng)])
                .collect();
            let reach = 3.0 * sigma + 0.15;
            let mut outliers: Vec<[f64; 2]> = Vec::new();
            let mut tries = 0;
            while outliers.len() < m as usize {
                tries += 1;
                if tries > 100_000 {
                    return Err(CaseError::Generation("cannot place outliers".into()));
                }
                let o: [f64; 2] = [rng.random_range(0.03..0.97), rng.random_range(0.03..0.97)];
                let d = ((o[0] - 0.5).powi(2) + (o[1] - 0.5).powi(2)).sqrt();
                let apart = outliers.iter().all(|q| ((q[0] - o[0]).powi(2) + (q[1] - o[1]).powi(2)).sqrt() >= 0.08);
                if d >= reach && apart {
                    outliers.push(o);
                }
            }
            pts.extend(outliers);
            let gt = if task == Task::ScatterOutlier {
                GroundTruth::YesNo { value: true }
            } else {
                GroundTruth::Count { value: m }
            };
            (vec![scatter_png(pts, &unit_canvas())?], gt, SCATTER_OUTLIER_PROMPT.to_string())
        }
        Task::ScatterCorrelation => {
            let (a, b) = match p.coefficients {
                Some(c) => c,
                None => {
                    let i = rng.random_range(0..COEFFICIENTS.len());
                    let mut j = rng.random_range(0..COEFFICIENTS.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    (COEFFICIENTS[i], COEFFICIENTS[j])
                }
            };
            for r in [a, b] {
                if !(0.1..=1.0).contains(&r) {
                    return Err(bad(format!("coefficient {r} outside [0.1, 1.0]")));
                }
            }
            if a == b {
                return Err(bad("the two coefficients must differ"));
            }
            p.coefficients = Some((a, b));
            let mut images = Vec::new();
            for r in [a, b] {
                let pts: Vec<[f64; 2]> = (0..points)
                    .map(|_| {
                        let x = gauss(&mut rng);
                        let e = gauss(&mut rng);
                        [x, r * x + (1.0 - r * r).max(0.0).sqrt() * e]
                    })
                    .collect();
                images.push(scatter_png(pts, &Canvas::default())?);
            }
            (images, GroundTruth::Correlation { first: a, second: b }, SCATTER_CORRELATION_PROMPT.to_string())
        }
        Task::PcClusterCount => {
            let k = check_range("clusters", p.clusters.unwrap_or_else(|| rng.random_range(1..=10)), 1, 10)?;
            p.clusters = Some(k);
            let centers = separated_centers(&mut rng, k as usize, PC_DIMS, 0.1, 0.9, 0.15)?;
            let sigma = 0.02 * spread;
            let mut rows = Vec::with_capacity(points);
            for (c, n) in centers.iter().zip(split(points, k as usize)) {
                for _ in 0..n {
                    rows.push(c.iter().map(|v| v + sigma * truncated(&mut rng)).collect::<Vec<f64>>());
                }
            }
            // Pin the axes to [0, 1] so one cluster does not fill them.
            rows.push(vec![0.0; PC_DIMS]);
            rows.push(vec![1.0; PC_DIMS]);
            let png = pc_png(&rows)?;
            (vec![png], GroundTruth::Count { value: k }, PC_CLUSTER_PROMPT.to_string())
        }
        Task::PcOutlierCount => {
            let m = check_range("outliers", p.outliers.unwrap_or_else(|| rng.random_range(1..=5)), 1, 5)?;
            p.outliers = Some(m);
            let sigma = 0.04 * spread;
            let mut rows: Vec<Vec<f64>> = (0..points - m as usize)
                .map(|_| (0..PC_DIMS).map(|_| 0.5 + sigma * truncated(&mut rng)).collect())
                .collect();
            let mut outliers: Vec<Vec<f64>> = Vec::new();
            let mut tries = 0;
            while outliers.len() < m as usize {
                tries += 1;
                if tries > 100_000 {
                    return Err(CaseError::Generation("cannot place outliers".into()));
                }
                let o: Vec<f64> = (0..PC_DIMS).map(|_| rng.random_range(0.0..1.0)).collect();
                let off = o.iter().filter(|v| (*v - 0.5).abs() > 3.0 * sigma + 0.15).count();
                let apart = outliers
                    .iter()
                    .all(|q| q.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) >= 0.1);
                if off >= 2 && apart {
                    outliers.push(o);
                }
            }
            rows.extend(outliers);
            (vec![pc_png(&rows)?], GroundTruth::Count { value: m }, PC_OUTLIER_PROMPT.to_string())
        }
        Task::PcCorrelation => {
            let correlated = p.correlated.unwrap_or_else(|| rng.random_bool(0.5));
            p.correlated = Some(correlated);
            let pair = rng.random_range(0..PC_DIMS - 1);
            let rows: Vec<Vec<f64>> = (0..points)
                .map(|_| {
                    let mut r: Vec<f64> = (0..PC_DIMS).map(|_| rng.random_range(0.0..1.0)).collect();
                    if correlated {
                        let noise = 0.05 * gauss(&mut rng);
                        r[pair + 1] = r[pair] + noise;
                    }
                    r
                })
                .collect();
            (vec![pc_png(&rows)?], GroundTruth::YesNo { value: correlated }, PC_CORRELATION_PROMPT.to_string())
        }
        Task::GraphNodeCount | Task::GraphFindNode | Task::GraphConnection | Task::GraphNeighbor => {
            let n = p.nodes.unwrap_or(GRAPH_NODES);
            if !(2..=26).contains(&n) {
                return Err(bad(format!("nodes = {n} outside [2, 26]")));
            }
            let prob = p.edge_probability.unwrap_or(EDGE_PROBABILITY);
            if !(0.0..=1.0).contains(&prob) {
                return Err(bad(format!("edge probability {prob} outside [0, 1]")));
            }
            p.nodes = Some(n);
            p.edge_probability = Some(prob);
            let graph = random_graph(&mut rng, n, prob);
            let layout_seed = rng.random::<u64>();
            let positions = fr_layout(&graph, LAYOUT_ITERATIONS, layout_seed);
            let labels: Vec<String> = (0..n).map(node_name).collect();
            let (img, _) = render_node_link(&graph, &positions, &labels, &Canvas::default())
                .map_err(|e| CaseError::Generation(e.to_string()))?;
            let png = encode(&img)?;
            let (gt, prompt) = match task {
                Task::GraphNodeCount => (GroundTruth::Count { value: n as u32 }, GRAPH_COUNT_PROMPT.to_string()),
                Task::GraphFindNode => {
                    let present = rng.random_bool(0.5);
                    let name = if present {
                        node_name(rng.random_range(0..n))
                    } else {
                        node_name(n + rng.random_range(0..10))
                    };
                    (GroundTruth::YesNo { value: present }, graph_find_prompt(&name))
                }
                Task::GraphConnection => {
                    let a = rng.random_range(0..n);
                    let mut b = rng.random_range(0..n - 1);
                    if b >= a {
                        b += 1;
                    }
                    let value = reachable(&graph, a).contains(&b);
                    (GroundTruth::YesNo { value }, graph_path_prompt(&node_name(a), &node_name(b)))
                }
                _ => {
                    let a = rng.random_range(0..n);
                    let neighbors = graph.neighbors(a).into_iter().map(node_name).collect();
                    (
                        GroundTruth::Neighbors { node: node_name(a), neighbors },
                        graph_neighbor_prompt(&node_name(a)),
                    )
                }
            };
            (vec![png], gt, prompt)
        }
        Task::VolumeRecognizable => {
            let peak = match p.peak_opacity {
                Some(o) => o,
                None => PEAK_OPACITIES[rng.random_range(0..PEAK_OPACITIES.len())],
            };
            if !(peak > 0.0 && peak <= 1.0) {
                return Err(bad(format!("peak opacity {peak} outside (0, 1]")));
            }
            p.peak_opacity = Some(peak);
            let mut spec = PhantomSpec::nested(32, (60, 85), (100, 125));
            spec.seed = seed;
            let vol = gen_volume_phantom(&spec).map_err(|e| CaseError::Generation(e.to_string()))?;
            let tool = VolumeTool::with_size(Arc::new(vol), 128, 128).map_err(|e| CaseError::Generation(e.to_string()))?;
            let params = ParamVector::new().with("start", 50.0).with("end", 140.0).with("peak", peak.max(0.01));
            let out = tool.render(&params).map_err(|e| CaseError::Generation(e.to_string()))?;
            let Some(ToolStats::Volume { structures }) = &out.stats else {
                return Err(CaseError::Generation("volume render returned no stats".into()));
            };
            let verdict = oracle_assess_volume(structures, VOLUME_TARGET, &VolumeThresholds::default())
                .map_err(|e| CaseError::Generation(e.to_string()))?
                .verdict;
            let value = matches!(verdict, Verdict::Recognizable | Verdict::Clear);
            let prompt = VOLUME_PROMPT.replace("{structure}", "a sphere inside a shell");
            (vec![out.png], GroundTruth::YesNo { value }, prompt)
        }
    };
    // Point counts only apply to the scatter and parallel-coordinate families.
    p.points = (task.family() <= 6).then_some(points);
    Ok(BenchCase {
        task,
        seed,
        params: p,
        images,
        ground_truth,
        prompt,
    })
}

fn pc_png(rows: &[Vec<f64>]) -> Result<Png, CaseError> {
    let (img, _) = render_parallel_coords(rows, &Canvas::default()).map_err(|e| CaseError::Generation(e.to_string()))?;
    encode(&img)
}

/// Each of the n·(n−1)/2 node pairs is an edge with probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Graph { nodes: n, edges }
}

/// Nodes reachable from `start` along edges in either direction.
pub fn reachable(graph: &Graph, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for w in graph.neighbors(v) {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen
}
