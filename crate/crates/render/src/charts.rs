//! Scatterplots, parallel coordinates and node-link diagrams.

use std::path::Path;

use ava_core::image::Image;
use ava_core::perception::OverplotMetrics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::font;

#[derive(Debug, thiserror::Error)]
pub enum ChartError {
    #[error("no points to draw")]
    EmptyPointSet,
    #[error("opacity {0} outside (0, 1]")]
    BadOpacity(f64),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("{labels} labels for {points} points")]
    LabelCount { labels: usize, points: usize },
    #[error("parallel coordinates need at least 2 dimensions and 1 row")]
    TooFewDims,
    #[error("row {row} has {got} values, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("node {0} has no position")]
    MissingPosition(usize),
    #[error("edge ({0}, {1}) refers to a missing node")]
    BadEdge(usize, usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv column `{0}` not found")]
    MissingColumn(String),
    #[error("csv value `{value}` in column `{column}` is not a number")]
    NotNumber { column: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSet {
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<i64>>,
}

impl PointSet {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Self { points, labels: None }
    }

    pub fn validate(&self) -> Result<(), ChartError> {
        if let Some(i) = self.points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(ChartError::NonFinite(i));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(ChartError::LabelCount {
                    labels: l.len(),
                    points: self.points.len(),
                });
            }
        }
        Ok(())
    }

    /// (xmin, xmax, ymin, ymax)
    pub fn bounds(&self) -> [f64; 4] {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for p in &self.points {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].max(p[0]);
            b[2] = b[2].min(p[1]);
            b[3] = b[3].max(p[1]);
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub margin: u32,
    /// Marker radius in pixels.
    pub radius: f64,
    /// Data bounds (xmin, xmax, ymin, ymax); the points' own bounds if unset.
    pub bounds: Option<[f64; 4]>,
    pub background: [u8; 3],
    pub ink: [u8; 3],
    pub axis: [u8; 3],
}

impl Default for Canvas {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            margin: 40,
            radius: 3.0,
            bounds: None,
            background: [255, 255, 255],
            ink: [31, 119, 180],
            axis: [120, 120, 120],
        }
    }
}

impl Canvas {
    fn blank(&self) -> Image {
        let [r, g, b] = self.background;
        Image::new(self.width, self.height, [r, g, b, 255])
    }

    /// Data to pixel coordinates; y grows downward.
    fn project(&self, b: [f64; 4], p: [f64; 2]) -> (f64, f64) {
        let m = self.margin as f64;
        let (w, h) = (self.width as f64 - 2.0 * m, self.height as f64 - 2.0 * m);
        let fx = if b[1] > b[0] { (p[0] - b[0]) / (b[1] - b[0]) } else { 0.5 };
        let fy = if b[3] > b[2] { (p[1] - b[2]) / (b[3] - b[2]) } else { 0.5 };
        (m + fx * w, self.height as f64 - m - fy * h)
    }

    fn draw_axes(&self, img: &mut Image) {
        let m = self.margin as i64;
        let (w, h) = (self.width as i64, self.height as i64);
        let mut pen = Pen::new(self.axis, 1.0);
        pen.line(img, (m as f64, (h - m) as f64), ((w - m) as f64, (h - m) as f64));
        pen.line(img, (m as f64, m as f64), (m as f64, (h - m) as f64));
    }
}

/// Blends a solid colour at a fixed opacity.
struct Pen {
    color: [f64; 3],
    opacity: f64,
}

impl Pen {
    fn new(color: [u8; 3], opacity: f64) -> Self {
        Self {
            color: color.map(|c| c as f64),
            opacity,
        }
    }

    fn plot(&mut self, img: &mut Image, x: i64, y: i64) {
        if x < 0 || y < 0 || x >= img.width() as i64 || y >= img.height() as i64 {
            return;
        }
        let old = img.pixel(x as u32, y as u32);
        let mut px = [0u8, 0, 0, 255];
        for i in 0..3 {
            let v = old[i] as f64 * (1.0 - self.opacity) + self.color[i] * self.opacity;
            px[i] = v.round().clamp(0.0, 255.0) as u8;
        }
        img.put(x as u32, y as u32, px);
    }

    /// DDA line; each pixel is visited once.
    fn line(&mut self, img: &mut Image, a: (f64, f64), b: (f64, f64)) {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let n = dx.abs().max(dy.abs()).ceil().max(1.0) as i64;
        let mut last = None;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let p = ((a.0 + dx * t).round() as i64, (a.1 + dy * t).round() as i64);
            if last != Some(p) {
                self.plot(img, p.0, p.1);
                last = Some(p);
            }
        }
    }
}

/// Per-pixel accumulated marker alpha (before quantization) and the number
/// of markers touching each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageBuffer {
    pub width: u32,
    pub height: u32,
    pub coverage: Vec<f64>,
    pub count: Vec<u32>,
}

/// Coverage at which a pixel counts as saturated.
pub const SATURATED: f64 = 0.98;

impl CoverageBuffer {
    pub fn at(&self, x: u32, y: u32) -> (f64, u32) {
        let i = (y * self.width + x) as usize;
        (self.coverage[i], self.count[i])
    }

    /// - `covered_fraction`: pixels touched by any marker over all pixels,
    /// - `saturated_fraction`: covered pixels with coverage ≥ 0.98 over
    ///   covered pixels,
    /// - `faintness`: highest coverage among pixels touched by exactly one
    ///   marker; without such pixels, the lowest coverage of any covered one.
    pub fn metrics(&self) -> OverplotMetrics {
        let total = self.coverage.len().max(1) as f64;
        let (mut covered, mut saturated) = (0usize, 0usize);
        let mut single_max: Option<f64> = None;
        let mut covered_min = f64::INFINITY;
        for (c, &n) in self.coverage.iter().zip(&self.count) {
            if n == 0 {
                continue;
            }
            covered += 1;
            if *c >= SATURATED {
                saturated += 1;
            }
            covered_min = covered_min.min(*c);
            if n == 1 {
                single_max = Some(single_max.map_or(*c, |m: f64| m.max(*c)));
            }
        }
        OverplotMetrics {
            saturated_fraction: if covered > 0 { saturated as f64 / covered as f64 } else { 0.0 },
            faintness: single_max.unwrap_or(if covered > 0 { covered_min } else { 0.0 }),
            covered_fraction: covered as f64 / total,
        }
    }
}

/// Draws every point as a filled disc with "over" blending at `opacity`.
/// A pixel belongs to a disc when its centre lies within `radius` of the
/// projected point.
pub fn render_scatter(
    points: &PointSet,
    opacity: f64,
    canvas: &Canvas,
) -> Result<(Image, CoverageBuffer), ChartError> {
    if points.points.is_empty() {
        return Err(ChartError::EmptyPointSet);
    }
    if !(opacity > 0.0 && opacity <= 1.0) {
        return Err(ChartError::BadOpacity(opacity));
    }
    points.validate()?;
    let bounds = canvas.bounds.unwrap_or_else(|| points.bounds());
    let mut img = canvas.blank();
    canvas.draw_axes(&mut img);
    let (w, h) = (canvas.width, canvas.height);
    let mut cov = CoverageBuffer {
        width: w,
        height: h,
        coverage: vec![0.0; (w * h) as usize],
        count: vec![0; (w * h) as usize],
    };
    let mut pen = Pen::new(canvas.ink, opacity);
    let r = canvas.radius;
    for p in &points.points {
        let (cx, cy) = canvas.project(bounds, *p);
        let x0 = (cx - r).floor().max(0.0) as i64;
        let x1 = ((cx + r).ceil() as i64).min(w as i64 - 1);
        let y0 = (cy - r).floor().max(0.0) as i64;
        let y1 = ((cy + r).ceil() as i64).min(h as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let i = (y as u32 * w + x as u32) as usize;
                cov.coverage[i] += (1.0 - cov.coverage[i]) * opacity;
                cov.count[i] += 1;
                pen.plot(&mut img, x, y);
            }
        }
    }
    Ok((img, cov))
}

/// Counts of primitives drawn, for checking renderers without pixels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DrawStats {
    pub polylines: usize,
    pub segments: usize,
    pub discs: usize,
    pub labels: usize,
    pub warnings: Vec<String>,
}

/// One polyline per row across evenly spaced vertical axes. Each axis is
/// normalized to its column's min and max; constant columns sit on the
/// midline.
pub fn render_parallel_coords(rows: &[Vec<f64>], canvas: &Canvas) -> Result<(Image, DrawStats), ChartError> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || d < 2 {
        return Err(ChartError::TooFewDims);
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(ChartError::Ragged {
                row: i,
                got: r.len(),
                expected: d,
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(ChartError::NonFinite(i));
        }
    }
    let mut stats = DrawStats::default();
    let mut ranges = Vec::with_capacity(d);
    for c in 0..d {
        let lo = rows.iter().map(|r| r[c]).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            let msg = format!("column {c} is constant; drawn on the midline");
            tracing::warn!("{msg}");
            stats.warnings.push(msg);
        }
        ranges.push((lo, hi));
    }
    let mut img = canvas.blank();
    let m = canvas.margin as f64;
    let (w, h) = (canvas.width as f64 - 2.0 * m, canvas.height as f64 - 2.0 * m);
    let axis_x = |c: usize| m + w * c as f64 / (d - 1) as f64;
    let mut axis_pen = Pen::new(canvas.axis, 1.0);
    for c in 0..d {
        axis_pen.line(&mut img, (axis_x(c), m), (axis_x(c), m + h));
    }
    let opacity = (20.0 / rows.len() as f64).clamp(0.05, 0.8);
    let mut pen = Pen::new(canvas.ink, opacity);
    for r in rows {
        let pts: Vec<(f64, f64)> = (0..d)
            .map(|c| {
                let (lo, hi) = ranges[c];
                let f = if hi > lo { (r[c] - lo) / (hi - lo) } else { 0.5 };
                (axis_x(c), m + h * (1.0 - f))
            })
            .collect();
        for s in pts.windows(2) {
            pen.line(&mut img, s[0], s[1]);
            stats.segments += 1;
        }
        stats.polylines += 1;
    }
    Ok((img, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn validate(&self) -> Result<(), ChartError> {
        match self.edges.iter().find(|(a, b)| *a >= self.nodes || *b >= self.nodes) {
            Some(&(a, b)) => Err(ChartError::BadEdge(a, b)),
            None => Ok(()),
        }
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| if a == v { Some(b) } else if b == v { Some(a) } else { None })
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn connected(&self, a: usize, b: usize) -> bool {
        self.edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }
}

/// Fruchterman–Reingold layout in the unit square from a seeded random
/// start. The result is centred so its bounding box's centre is (0.5, 0.5).
pub fn fr_layout(graph: &Graph, iterations: u32, seed: u64) -> Vec<[f64; 2]> {
    let n = graph.nodes;
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let k = (1.0 / n as f64).sqrt();
    let t0 = 0.1;
    for it in 0..iterations {
        let mut disp = vec![[0.0f64; 2]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
                let dist = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-9);
                let f = k * k / dist;
                for a in 0..2 {
                    disp[i][a] += d[a] / dist * f;
                    disp[j][a] -= d[a] / dist * f;
                }
            }
        }
        for &(u, v) in &graph.edges {
            if u == v {
                continue;
            }
            let d = [pos[u][0] - pos[v][0], pos[u][1] - pos[v][1]];
            let dist = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-9);
            let f = dist * dist / k;
            for a in 0..2 {
                disp[u][a] -= d[a] / dist * f;
                disp[v][a] += d[a] / dist * f;
            }
        }
        let t = t0 * (1.0 - it as f64 / iterations as f64);
        for i in 0..n {
            let len = (disp[i][0] * disp[i][0] + disp[i][1] * disp[i][1]).sqrt();
            if len > 0.0 {
                for a in 0..2 {
                    pos[i][a] = (pos[i][a] + disp[i][a] / len * len.min(t)).clamp(0.0, 1.0);
                }
            }
        }
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &pos {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    for p in &mut pos {
        for a in 0..2 {
            p[a] += 0.5 - (lo[a] + hi[a]) / 2.0;
        }
    }
    pos
}

pub const NODE_RADIUS: f64 = 16.0;
const LABEL_SCALE: u32 = 2;

/// Edges as line segments, nodes as discs with their label centred. Nodes
/// that land on the same pixel as an earlier node get their label pushed
/// down by one label height per earlier node.
pub fn render_node_link(
    graph: &Graph,
    positions: &[[f64; 2]],
    labels: &[String],
    canvas: &Canvas,
) -> Result<(Image, DrawStats), ChartError> {
    graph.validate()?;
    if positions.len() < graph.nodes {
        return Err(ChartError::MissingPosition(positions.len()));
    }
    let mut img = canvas.blank();
    let mut stats = DrawStats::default();
    let unit = [0.0, 1.0, 0.0, 1.0];
    let px: Vec<(f64, f64)> = positions[..graph.nodes].iter().map(|p| canvas.project(unit, *p)).collect();
    let mut edge_pen = Pen::new(canvas.axis, 1.0);
    for &(a, b) in &graph.edges {
        edge_pen.line(&mut img, px[a], px[b]);
        stats.segments += 1;
    }
    let fill = Pen::new([198, 219, 239], 1.0);
    let mut fill = fill;
    let mut text = Pen::new([0, 0, 0], 1.0);
    let r = NODE_RADIUS;
    for (i, &(cx, cy)) in px.iter().enumerate() {
        for y in (cy - r).floor() as i64..=(cy + r).ceil() as i64 {
            for x in (cx - r).floor() as i64..=(cx + r).ceil() as i64 {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                if dx * dx + dy * dy <= r * r {
                    fill.plot(&mut img, x, y);
                }
            }
        }
        stats.discs += 1;
        let Some(label) = labels.get(i) else { continue };
        let key = (cx.round() as i64, cy.round() as i64);
        let earlier = px[..i]
            .iter()
            .filter(|p| (p.0.round() as i64, p.1.round() as i64) == key)
            .count() as i64;
        let (tw, th) = font::text_size(label, LABEL_SCALE);
        let x0 = cx.round() as i64 - tw as i64 / 2;
        let y0 = cy.round() as i64 - th as i64 / 2 + earlier * (th as i64 + 2);
        font::raster(label, x0, y0, LABEL_SCALE, |x, y| text.plot(&mut img, x, y));
        stats.labels += 1;
    }
    Ok((img, stats))
}

fn column_indices(headers: &csv::StringRecord, names: &[&str]) -> Result<Vec<usize>, ChartError> {
    names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| ChartError::MissingColumn(n.to_string()))
        })
        .collect()
}

fn parse_cell(record: &csv::StringRecord, i: usize, column: &str) -> Result<f64, ChartError> {
    let v = record.get(i).unwrap_or("").trim();
    v.parse().map_err(|_| ChartError::NotNumber {
        column: column.to_string(),
        value: v.to_string(),
    })
}

/// Reads the named numeric columns of a CSV file with a header row.
pub fn load_rows_csv(path: &Path, columns: &[&str]) -> Result<Vec<Vec<f64>>, ChartError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = column_indices(rdr.headers()?, columns)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = idx
            .iter()
            .zip(columns)
            .map(|(&i, c)| parse_cell(&rec, i, c))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads x/y columns (and optionally an integer label column) as points.
pub fn load_points_csv(path: &Path, x: &str, y: &str, label: Option<&str>) -> Result<PointSet, ChartError> {
    let mut cols = vec![x, y];
    cols.extend(label);
    let rows = load_rows_csv(path, &cols)?;
    Ok(PointSet {
        points: rows.iter().map(|r| [r[0], r[1]]).collect(),
        labels: label.map(|_| rows.iter().map(|r| r[2] as i64).collect()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixed_canvas() -> Canvas {
        Canvas {
            bounds: Some([0.0, 1.0, 0.0, 1.0]),
            ..Default::default()
        }
    }

    #[test]
    fn single_point() {
        let (_, cov) = render_scatter(&PointSet::new(vec![[0.5, 0.5]]), 1.0, &fixed_canvas()).unwrap();
        let (c, n) = cov.at(320, 240);
        assert_eq!((c, n), (1.0, 1));
        assert!(cov.count.iter().all(|&n| n <= 1));
    }

    #[test]
    fn coincident_points_compose() {
        let (_, cov) = render_scatter(&PointSet::new(vec![[0.5, 0.5]; 2]), 0.5, &fixed_canvas()).unwrap();
        assert_eq!(cov.at(320, 240), (0.75, 2));
    }

    #[test]
    fn scatter_errors() {
        assert!(matches!(
            render_scatter(&PointSet::default(), 0.5, &Canvas::default()),
            Err(ChartError::EmptyPointSet)
        ));
        let one = PointSet::new(vec![[0.0, 0.0]]);
        assert!(matches!(render_scatter(&one, 0.0, &Canvas::default()), Err(ChartError::BadOpacity(_))));
    }

    #[test]
    fn metrics() {
        let mut pts = vec![[0.5, 0.5]; 16];
        pts.push([0.1, 0.1]);
        let (_, cov) = render_scatter(&PointSet::new(pts), 0.125, &fixed_canvas()).unwrap();
        let m = cov.metrics();
        assert_eq!(m.faintness, 0.125);
        assert_eq!(m.saturated_fraction, 0.0);
        assert!(m.covered_fraction > 0.0);
    }

    #[test]
    fn parallel_coords_counts() {
        let rows = vec![vec![1.0, 2.0, 3.0]];
        let (_, s) = render_parallel_coords(&rows, &Canvas::default()).unwrap();
        assert_eq!((s.polylines, s.segments), (1, 2));
        assert_eq!(s.warnings.len(), 3);
        let rows: Vec<Vec<f64>> = (0..500).map(|i| (0..5).map(|d| ((i * 7 + d * 3) % 11) as f64).collect()).collect();
        let (_, s) = render_parallel_coords(&rows, &Canvas::default()).unwrap();
        assert_eq!(s.polylines, 500);
        assert!(matches!(
            render_parallel_coords(&[vec![1.0, 2.0], vec![1.0]], &Canvas::default()),
            Err(ChartError::Ragged { row: 1, .. })
        ));
    }

    #[test]
    fn layouts() {
        assert_eq!(fr_layout(&Graph { nodes: 1, edges: vec![] }, 200, 1), vec![[0.5, 0.5]]);
        let dist = |p: &[[f64; 2]]| ((p[0][0] - p[1][0]).powi(2) + (p[0][1] - p[1][1]).powi(2)).sqrt();
        for seed in 0..5 {
            let joined = fr_layout(&Graph { nodes: 2, edges: vec![(0, 1)] }, 200, seed);
            let apart = fr_layout(&Graph { nodes: 2, edges: vec![] }, 200, seed);
            assert!(dist(&joined) < dist(&apart), "seed {seed}");
        }
        let g = Graph {
            nodes: 10,
            edges: vec![(0, 1), (2, 3), (4, 5)],
        };
        assert_eq!(fr_layout(&g, 200, 9), fr_layout(&g, 200, 9));
    }

    #[test]
    fn node_link_counts() {
        let g = Graph {
            nodes: 10,
            edges: (0..9).map(|i| (i, i + 1)).collect(),
        };
        let pos = fr_layout(&g, 200, 3);
        let labels: Vec<String> = (0..10).map(|i| format!("N{i}")).collect();
        let (_, s) = render_node_link(&g, &pos, &labels, &Canvas::default()).unwrap();
        assert_eq!((s.segments, s.discs, s.labels), (9, 10, 10));
        let empty = Graph { nodes: 3, edges: vec![] };
        let (_, s) = render_node_link(&empty, &[[0.5, 0.5]; 3], &labels[..3], &Canvas::default()).unwrap();
        assert_eq!((s.segments, s.labels), (0, 3));
        assert!(matches!(
            render_node_link(&empty, &[[0.5, 0.5]], &labels, &Canvas::default()),
            Err(ChartError::MissingPosition(1))
        ));
    }

    #[test]
    fn stacked_labels_do_not_overlap() {
        let g = Graph { nodes: 2, edges: vec![] };
        let one = render_node_link(&g, &[[0.5, 0.5]; 2], &["N1".into(), String::new()], &Canvas::default()).unwrap().0;
        let two = render_node_link(&g, &[[0.5, 0.5]; 2], &["N1".into(), "N2".into()], &Canvas::default()).unwrap().0;
        assert_ne!(one, two);
    }

    #[test]
    fn csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,b,label\n1,2,0\n3,4.5,1\n").unwrap();
        let ps = load_points_csv(&p, "a", "b", Some("label")).unwrap();
        assert_eq!(ps.points, vec![[1.0, 2.0], [3.0, 4.5]]);
        assert_eq!(ps.labels, Some(vec![0, 1]));
        assert!(matches!(load_rows_csv(&p, &["zz"]), Err(ChartError::MissingColumn(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn counts_match_brute_force(pts in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12), r in 1.0f64..6.0) {
            let canvas = Canvas { width: 40, height: 30, margin: 4, radius: r, bounds: Some([0.0, 1.0, 0.0, 1.0]), ..Default::default() };
            let ps = PointSet::new(pts.iter().map(|&(x, y)| [x, y]).collect());
            let (_, cov) = render_scatter(&ps, 0.3, &canvas).unwrap();
            for y in 0..30u32 {
                for x in 0..40u32 {
                    let n = ps.points.iter().filter(|p| {
                        let cx = 4.0 + p[0] * 32.0;
                        let cy = 30.0 - 4.0 - p[1] * 22.0;
                        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                        dx * dx + dy * dy <= r * r
                    }).count() as u32;
                    let (c, got) = cov.at(x, y);
                    prop_assert_eq!(got, n);
                    prop_assert!((c - (1.0 - 0.7f64.powi(n as i32))).abs() < 1e-12);
                }
            }
        }
    }
}
