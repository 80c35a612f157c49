//! In-process tools wrapping the renderers.

use std::path::Path;
use std::sync::Arc;

use ava_core::params::{ParamEntry, ParamSpace, ParamVector};
use ava_core::perception::EmbeddingStats;
use ava_core::tool::{RenderOutput, ToolDescriptor, ToolError, ToolMetadata, ToolStats, VisTool};
use ava_render::charts::{load_points_csv, render_scatter, Canvas, PointSet};
use ava_render::volren::{
    compute_histogram, load_volume, render_volume, Camera, RenderSettings, TriangularTF, VolumeDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::client::RemoteTool;

pub const VOLUME_IMAGE_SIZE: u32 = 256;
pub const VOLUME_HISTOGRAM_BINS: usize = 10;

fn number(params: &ParamVector, name: &str) -> Result<f64, ToolError> {
    params
        .number(name)
        .ok_or_else(|| ToolError::InvalidParams(ava_core::params::ParamError::Missing(name.into())))
}

fn png(image: &ava_core::image::Image) -> Result<ava_core::image::Png, ToolError> {
    image.to_png().map_err(|e| ToolError::Render(e.to_string()))
}

/// Ray-cast volume with a triangular opacity window.
///
/// Parameters: `start`, `end` over the value range, `peak` in [0.01, 1].
pub struct VolumeTool {
    volume: Arc<VolumeDataset>,
    camera: Camera,
    settings: RenderSettings,
    descriptor: ToolDescriptor,
}

impl VolumeTool {
    pub fn new(volume: Arc<VolumeDataset>) -> Result<Self, ToolError> {
        Self::with_size(volume, VOLUME_IMAGE_SIZE, VOLUME_IMAGE_SIZE)
    }

    pub fn with_size(volume: Arc<VolumeDataset>, width: u32, height: u32) -> Result<Self, ToolError> {
        let (lo, hi) = volume.value_range();
        if !(hi > lo) {
            return Err(ToolError::Render(format!("volume is constant ({lo})")));
        }
        let space = ParamSpace::new(vec![
            ParamEntry::continuous("start", lo, hi),
            ParamEntry::continuous("end", lo, hi),
            ParamEntry::continuous("peak", 0.01, 1.0),
        ])?;
        let metadata = ToolMetadata {
            value_range: Some((lo, hi)),
            histogram: Some(compute_histogram(&volume, VOLUME_HISTOGRAM_BINS).counts),
            modality: Some("volume".into()),
        };
        Ok(Self {
            camera: Camera::for_volume(&volume, width, height),
            settings: RenderSettings::default(),
            descriptor: ToolDescriptor::new("volume", space, metadata),
            volume,
        })
    }

    pub fn open(raw: &Path) -> Result<Self, ToolError> {
        let vol = load_volume(raw).map_err(|e| ToolError::Render(e.to_string()))?;
        Self::new(Arc::new(vol))
    }

    pub fn volume(&self) -> &VolumeDataset {
        &self.volume
    }
}

impl VisTool for VolumeTool {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        Ok(self.descriptor.clone())
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        self.descriptor.param_space.check(params)?;
        let tf = TriangularTF::new(number(params, "start")?, number(params, "end")?, number(params, "peak")?)
            .map_err(|e| ToolError::Protocol {
                code: "invalid_param".into(),
                message: e.to_string(),
            })?;
        let (image, stats) = render_volume(&self.volume, &tf, &self.camera, &self.settings)
            .map_err(|e| ToolError::Render(e.to_string()))?;
        Ok(RenderOutput {
            png: png(&image)?,
            stats: stats.map(|structures| ToolStats::Volume { structures }),
        })
    }
}

/// Scatterplot with one parameter, `opacity` in [0.001, 1].
pub struct ScatterTool {
    points: PointSet,
    canvas: Canvas,
    descriptor: ToolDescriptor,
}

impl ScatterTool {
    pub fn new(points: PointSet, canvas: Canvas) -> Result<Self, ToolError> {
        points.validate().map_err(|e| ToolError::Render(e.to_string()))?;
        if points.points.is_empty() {
            return Err(ToolError::Render("no points".into()));
        }
        let space = ParamSpace::new(vec![ParamEntry::continuous("opacity", 0.001, 1.0)])?;
        let metadata = ToolMetadata {
            modality: Some("scatter".into()),
            ..Default::default()
        };
        Ok(Self {
            points,
            canvas,
            descriptor: ToolDescriptor::new("scatter", space, metadata),
        })
    }

    /// Reads `x`, `y` columns from a CSV file.
    pub fn open(csv: &Path) -> Result<Self, ToolError> {
        let points = load_points_csv(csv, "x", "y", None).map_err(|e| ToolError::Render(e.to_string()))?;
        Self::new(points, Canvas::default())
    }

    /// A dense seeded point cloud: `n` points from four Gaussian blobs.
    pub fn demo(n: usize, seed: u64) -> Result<Self, ToolError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.3, 0.3], [0.7, 0.35], [0.5, 0.7], [0.2, 0.75]];
        let points = (0..n)
            .map(|i| {
                let c = centers[i % centers.len()];
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                [c[0] + 0.06 * dx, c[1] + 0.06 * dy]
            })
            .collect();
        let canvas = Canvas {
            bounds: Some([0.0, 1.0, 0.0, 1.0]),
            ..Default::default()
        };
        Self::new(PointSet::new(points), canvas)
    }
}

impl VisTool for ScatterTool {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        Ok(self.descriptor.clone())
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        self.descriptor.param_space.check(params)?;
        let (image, cov) = render_scatter(&self.points, number(params, "opacity")?, &self.canvas)
            .map_err(|e| ToolError::Render(e.to_string()))?;
        Ok(RenderOutput {
            png: png(&image)?,
            stats: Some(ToolStats::Scatter(cov.metrics())),
        })
    }
}

/// One hyperparameter of the mock embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct MockAxis {
    pub entry: ParamEntry,
    pub optimum: f64,
    /// Width of the separation bump, in parameter units.
    pub sigma: f64,
}

/// Stand-in for a dimensionality-reduction tool with a known optimum.
///
/// Renders `clusters` Gaussian blobs whose centres sit on a circle of radius
/// `s(h) = s_max · exp(−Σ ((h_i − h*_i) / σ_i)²)`. Per-cluster noise is
/// drawn once from the seed and mean-centred, so the reported quality
/// (mean centroid distance over mean within-cluster spread) is exactly
/// proportional to `s(h)`.
pub struct MockDrTool {
    name: String,
    axes: Vec<MockAxis>,
    s_max: f64,
    labels: Vec<usize>,
    noise: Vec<[f64; 2]>,
    clusters: usize,
    canvas: Canvas,
    descriptor: ToolDescriptor,
}

pub const MOCK_DR_CLUSTERS: usize = 4;
pub const MOCK_DR_POINTS_PER_CLUSTER: usize = 60;
const MOCK_DR_NOISE: f64 = 0.12;

impl MockDrTool {
    pub fn new(name: impl Into<String>, axes: Vec<MockAxis>, seed: u64) -> Result<Self, ToolError> {
        let space = ParamSpace::new(axes.iter().map(|a| a.entry.clone()).collect())?;
        if axes.iter().any(|a| !(a.sigma > 0.0)) {
            return Err(ToolError::Render("mock axis sigma must be positive".into()));
        }
        let clusters = MOCK_DR_CLUSTERS;
        let per = MOCK_DR_POINTS_PER_CLUSTER;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise = Vec::with_capacity(clusters * per);
        let mut labels = Vec::with_capacity(clusters * per);
        for k in 0..clusters {
            let mut block: Vec<[f64; 2]> = (0..per)
                .map(|_| {
                    let x: f64 = rng.sample(StandardNormal);
                    let y: f64 = rng.sample(StandardNormal);
                    [MOCK_DR_NOISE * x, MOCK_DR_NOISE * y]
                })
                .collect();
            let mean = [0, 1].map(|a| block.iter().map(|p| p[a]).sum::<f64>() / per as f64);
            for p in &mut block {
                p[0] -= mean[0];
                p[1] -= mean[1];
            }
            noise.extend(block);
            labels.extend(std::iter::repeat_n(k, per));
        }
        let canvas = Canvas {
            width: 320,
            height: 320,
            margin: 16,
            radius: 2.5,
            bounds: Some([-1.5, 1.5, -1.5, 1.5]),
            ..Default::default()
        };
        let metadata = ToolMetadata {
            modality: Some("embedding".into()),
            ..Default::default()
        };
        let name = name.into();
        Ok(Self {
            descriptor: ToolDescriptor::new(name.clone(), space, metadata),
            name,
            axes,
            s_max: 1.0,
            labels,
            noise,
            clusters,
            canvas,
        })
    }

    /// `perplexity` in [2, 100] with its optimum at 30.
    pub fn single(seed: u64) -> Self {
        let axes = vec![MockAxis {
            entry: ParamEntry::continuous("perplexity", 2.0, 100.0),
            optimum: 30.0,
            sigma: 20.0,
        }];
        Self::new("mock-dr", axes, seed).expect("fixed mock axes are valid")
    }

    /// Five coupled hyperparameters with a narrow optimum.
    pub fn five(seed: u64) -> Self {
        let axis = |entry: ParamEntry, u: f64| {
            let span = entry.upper - entry.lower;
            MockAxis {
                optimum: entry.lower + u * span,
                sigma: 0.15 * span,
                entry,
            }
        };
        let axes = vec![
            axis(ParamEntry::continuous("perplexity", 2.0, 100.0), 0.28),
            axis(ParamEntry::continuous("learning_rate", 10.0, 1000.0), 0.7),
            axis(ParamEntry::continuous("early_exaggeration", 1.0, 50.0), 0.2),
            axis(ParamEntry::integer("n_iter", 250, 2000), 0.6),
            axis(ParamEntry::continuous("angle", 0.1, 0.9), 0.4),
        ];
        Self::new("mock-dr-5", axes, seed).expect("fixed mock axes are valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn axes(&self) -> &[MockAxis] {
        &self.axes
    }

    /// Parameters at the known optimum.
    pub fn optimum(&self) -> ParamVector {
        let mut v = ParamVector::new();
        for a in &self.axes {
            v.set(a.entry.name.clone(), a.optimum);
        }
        v
    }

    pub fn separation(&self, params: &ParamVector) -> Result<f64, ToolError> {
        let mut e = 0.0;
        for a in &self.axes {
            let h = number(params, &a.entry.name)?;
            e += ((h - a.optimum) / a.sigma).powi(2);
        }
        Ok(self.s_max * (-e).exp())
    }

    pub fn embed(&self, s: f64) -> Vec<[f64; 2]> {
        self.noise
            .iter()
            .zip(&self.labels)
            .map(|(n, &k)| {
                let theta = std::f64::consts::TAU * k as f64 / self.clusters as f64;
                [s * theta.cos() + n[0], s * theta.sin() + n[1]]
            })
            .collect()
    }

    /// Mean pairwise centroid distance over mean distance to own centroid.
    pub fn quality(&self, points: &[[f64; 2]]) -> f64 {
        let mut centroids = vec![[0.0f64; 2]; self.clusters];
        let mut counts = vec![0usize; self.clusters];
        for (p, &k) in points.iter().zip(&self.labels) {
            centroids[k][0] += p[0];
            centroids[k][1] += p[1];
            counts[k] += 1;
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            c[0] /= n as f64;
            c[1] /= n as f64;
        }
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let spread = points
            .iter()
            .zip(&self.labels)
            .map(|(p, &k)| dist(*p, centroids[k]))
            .sum::<f64>()
            / points.len() as f64;
        let (mut between, mut pairs) = (0.0, 0);
        for i in 0..self.clusters {
            for j in i + 1..self.clusters {
                between += dist(centroids[i], centroids[j]);
                pairs += 1;
            }
        }
        between / pairs as f64 / spread
    }
}

impl VisTool for MockDrTool {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        Ok(self.descriptor.clone())
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        self.descriptor.param_space.check(params)?;
        let points = self.embed(self.separation(params)?);
        let quality = self.quality(&points);
        let (image, _) = render_scatter(&PointSet::new(points.clone()), 0.6, &self.canvas)
            .map_err(|e| ToolError::Render(e.to_string()))?;
        Ok(RenderOutput {
            png: png(&image)?,
            stats: Some(ToolStats::Embedding(EmbeddingStats { points, quality })),
        })
    }
}

pub const BUILTIN_NAMES: &[&str] = &["volume", "scatter", "mock-dr", "mock-dr-5"];
pub const MOCK_DR_SEED: u64 = 7;
pub const SCATTER_DEMO_POINTS: usize = 5000;

/// Resolves a tool spec: `builtin:NAME` or an `http://` endpoint.
///
/// `builtin:volume` needs `data` (a raw file with its sidecar);
/// `builtin:scatter` reads `x`, `y` columns from `data` when given and a
/// seeded demo cloud otherwise. The mock DR tools ignore `data`.
pub fn open_tool(spec: &str, data: Option<&Path>) -> Result<Arc<dyn VisTool>, ToolError> {
    if spec.starts_with("http://") || spec.starts_with("https://") {
        return Ok(Arc::new(RemoteTool::new(spec)));
    }
    let name = spec.strip_prefix("builtin:").unwrap_or(spec);
    let unknown = || ToolError::Protocol {
        code: "unknown_tool".into(),
        message: format!("`{spec}` is neither an http endpoint nor one of builtin:{}", BUILTIN_NAMES.join(", builtin:")),
    };
    Ok(match name {
        "volume" => {
            let path = data.ok_or_else(|| ToolError::Protocol {
                code: "missing_data".into(),
                message: "builtin:volume needs a volume file".into(),
            })?;
            Arc::new(VolumeTool::open(path)?)
        }
        "scatter" => match data {
            Some(p) => Arc::new(ScatterTool::open(p)?),
            None => Arc::new(ScatterTool::demo(SCATTER_DEMO_POINTS, 1)?),
        },
        "mock-dr" => Arc::new(MockDrTool::single(MOCK_DR_SEED)),
        "mock-dr-5" => Arc::new(MockDrTool::five(MOCK_DR_SEED)),
        _ => return Err(unknown()),
    })
}
