//! Software direct volume rendering with a triangular opacity transfer
//! function.
//!
//! Rays start at the camera eye and are sampled at `t = k * step` for every
//! integer `k` whose sample lies inside the volume box
//! `[0, dims * spacing)`. Samples use the nearest voxel
//! (`floor(p / spacing)`) for both the scalar value and the structure label.
//! Compositing is front to back; once accumulated alpha reaches the
//! termination threshold the pixel is treated as opaque and the ray keeps
//! marching only to record which structures it passes through.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ava_core::image::Image;
use ava_core::perception::StructureStat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum VolumeError {
    #[error("expected {expected} bytes for the given dims, found {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("sidecar {path}: {source}")]
    Sidecar {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("structure masks `{0}` and `{1}` overlap")]
    OverlappingMasks(String, String),
    #[error("invalid transfer function: {0}")]
    BadTransferFunction(String),
    #[error("invalid camera: {0}")]
    BadCamera(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> VolumeError + '_ {
    move |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelType {
    U8,
    U16,
}

impl VoxelType {
    pub fn bytes(self) -> usize {
        match self {
            VoxelType::U8 => 1,
            VoxelType::U16 => 2,
        }
    }
}

/// Dense scalar volume, x fastest. Structure masks are stored as one label
/// per voxel (0 = no structure).
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeDataset {
    dims: [usize; 3],
    voxel_type: VoxelType,
    spacing: [f64; 3],
    voxels: Vec<u16>,
    value_range: (f64, f64),
    structures: Vec<String>,
    labels: Option<Vec<u8>>,
}

impl VolumeDataset {
    pub fn new(
        dims: [usize; 3],
        voxel_type: VoxelType,
        spacing: [f64; 3],
        voxels: Vec<u16>,
    ) -> Result<Self, VolumeError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::Invalid(format!("dims {dims:?} must be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Invalid(format!("spacing {spacing:?} must be positive")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(VolumeError::SizeMismatch {
                expected: n * voxel_type.bytes(),
                got: voxels.len() * voxel_type.bytes(),
            });
        }
        if voxel_type == VoxelType::U8 && voxels.iter().any(|&v| v > 255) {
            return Err(VolumeError::Invalid("u8 volume holds values above 255".into()));
        }
        let lo = *voxels.iter().min().unwrap();
        let hi = *voxels.iter().max().unwrap();
        Ok(Self {
            dims,
            voxel_type,
            spacing,
            voxels,
            value_range: (lo as f64, hi as f64),
            structures: Vec::new(),
            labels: None,
        })
    }

    /// Attaches ground-truth structure masks. Masks must not overlap.
    pub fn with_masks(mut self, masks: BTreeMap<String, Vec<bool>>) -> Result<Self, VolumeError> {
        if masks.len() > 255 {
            return Err(VolumeError::Invalid("at most 255 structures".into()));
        }
        let n = self.voxel_count();
        let mut labels = vec![0u8; n];
        let mut names: Vec<String> = Vec::new();
        for (i, (name, mask)) in masks.into_iter().enumerate() {
            if mask.len() != n {
                return Err(VolumeError::Invalid(format!(
                    "mask `{name}` has {} voxels, volume has {n}",
                    mask.len()
                )));
            }
            for (j, &m) in mask.iter().enumerate() {
                if m {
                    if labels[j] != 0 {
                        let other = names[labels[j] as usize - 1].clone();
                        return Err(VolumeError::OverlappingMasks(other, name));
                    }
                    labels[j] = i as u8 + 1;
                }
            }
            names.push(name);
        }
        self.structures = names;
        self.labels = Some(labels);
        Ok(self)
    }

    /// Declares the nominal value range, e.g. the full 8-bit range for a
    /// volume whose voxels do not reach it. Must contain every voxel.
    pub fn with_value_range(mut self, lo: f64, hi: f64) -> Result<Self, VolumeError> {
        let (a, b) = self.value_range;
        if !(lo <= a && b <= hi && lo < hi) {
            return Err(VolumeError::Invalid(format!(
                "declared range [{lo}, {hi}] must contain voxel range [{a}, {b}]"
            )));
        }
        self.value_range = (lo, hi);
        Ok(self)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_type(&self) -> VoxelType {
        self.voxel_type
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[u16] {
        &self.voxels
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn value(&self, x: usize, y: usize, z: usize) -> u16 {
        self.voxels[self.index(x, y, z)]
    }

    /// Structure names in label order (label `i + 1` is `structures()[i]`).
    pub fn structures(&self) -> &[String] {
        &self.structures
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn mask(&self, name: &str) -> Option<Vec<bool>> {
        let i = self.structures.iter().position(|s| s == name)? as u8 + 1;
        Some(self.labels.as_ref()?.iter().map(|&l| l == i).collect())
    }

    /// Physical extent along each axis.
    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.dims[a] as f64 * self.spacing[a])
    }
}

fn decode(bytes: &[u8], voxel_type: VoxelType) -> Vec<u16> {
    match voxel_type {
        VoxelType::U8 => bytes.iter().map(|&b| b as u16).collect(),
        VoxelType::U16 => bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect(),
    }
}

/// Reads a headerless little-endian volume with unit spacing.
pub fn load_raw(path: &Path, dims: [usize; 3], voxel_type: VoxelType) -> Result<VolumeDataset, VolumeError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = dims[0] * dims[1] * dims[2] * voxel_type.bytes();
    if bytes.len() != expected {
        return Err(VolumeError::SizeMismatch {
            expected,
            got: bytes.len(),
        });
    }
    VolumeDataset::new(dims, voxel_type, [1.0; 3], decode(&bytes, voxel_type))
}

/// JSON description stored next to a RAW file. Mask paths are u8 RAW files
/// (nonzero = inside) relative to the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSidecar {
    pub dims: [usize; 3],
    pub voxel_type: VoxelType,
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub masks: BTreeMap<String, String>,
    /// Nominal value range; the voxel min/max when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_range: Option<(f64, f64)>,
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

/// `volume.raw` pairs with `volume.json` (or `volume.raw.json`).
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let appended = PathBuf::from(format!("{}.json", raw.display()));
    if appended.exists() {
        appended
    } else {
        raw.with_extension("json")
    }
}

pub fn load_volume(raw: &Path) -> Result<VolumeDataset, VolumeError> {
    let sc_path = sidecar_path(raw);
    let text = fs::read_to_string(&sc_path).map_err(io_err(&sc_path))?;
    let sc: VolumeSidecar = serde_json::from_str(&text).map_err(|source| VolumeError::Sidecar {
        path: sc_path.clone(),
        source,
    })?;
    let base = load_raw(raw, sc.dims, sc.voxel_type)?;
    let mut vol = VolumeDataset::new(sc.dims, sc.voxel_type, sc.spacing, base.voxels)?;
    if let Some((lo, hi)) = sc.value_range {
        vol = vol.with_value_range(lo, hi)?;
    }
    if sc.masks.is_empty() {
        return Ok(vol);
    }
    let dir = sc_path.parent().unwrap_or(Path::new("."));
    let mut masks = BTreeMap::new();
    for (name, rel) in &sc.masks {
        let p = dir.join(rel);
        let bytes = fs::read(&p).map_err(io_err(&p))?;
        if bytes.len() != vol.voxel_count() {
            return Err(VolumeError::SizeMismatch {
                expected: vol.voxel_count(),
                got: bytes.len(),
            });
        }
        masks.insert(name.clone(), bytes.iter().map(|&b| b != 0).collect());
    }
    vol.with_masks(masks)
}

/// Writes `raw`, its sidecar and one mask file per structure.
pub fn write_volume(raw: &Path, vol: &VolumeDataset) -> Result<PathBuf, VolumeError> {
    let bytes: Vec<u8> = match vol.voxel_type {
        VoxelType::U8 => vol.voxels.iter().map(|&v| v as u8).collect(),
        VoxelType::U16 => vol.voxels.iter().flat_map(|v| v.to_le_bytes()).collect(),
    };
    fs::write(raw, bytes).map_err(io_err(raw))?;
    let stem = raw.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
    let dir = raw.parent().unwrap_or(Path::new("."));
    let mut masks = BTreeMap::new();
    for name in &vol.structures {
        let file = format!("{stem}.mask.{name}.raw");
        let mask: Vec<u8> = vol.mask(name).unwrap().into_iter().map(u8::from).collect();
        let p = dir.join(&file);
        fs::write(&p, mask).map_err(io_err(&p))?;
        masks.insert(name.clone(), file);
    }
    let sc = VolumeSidecar {
        dims: vol.dims,
        voxel_type: vol.voxel_type,
        spacing: vol.spacing,
        masks,
        value_range: Some(vol.value_range),
    };
    let sc_path = raw.with_extension("json");
    let text = serde_json::to_string_pretty(&sc).expect("sidecars always serialize");
    fs::write(&sc_path, text).map_err(io_err(&sc_path))?;
    Ok(sc_path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub min: f64,
    pub max: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bin_of(&self, v: f64) -> usize {
        let bins = self.counts.len();
        if self.max <= self.min {
            return 0;
        }
        (((v - self.min) / (self.max - self.min) * bins as f64).floor() as usize).min(bins - 1)
    }
}

/// Equal-width bins over the value range. `bins` must be at least 1.
pub fn compute_histogram(vol: &VolumeDataset, bins: usize) -> Histogram {
    assert!(bins >= 1, "histogram needs at least one bin");
    let (min, max) = vol.value_range;
    let mut h = Histogram {
        min,
        max,
        counts: vec![0; bins],
    };
    for &v in &vol.voxels {
        let b = h.bin_of(v as f64);
        h.counts[b] += 1;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularTF {
    pub start: f64,
    pub end: f64,
    pub peak_opacity: f64,
}

impl TriangularTF {
    pub fn new(start: f64, end: f64, peak_opacity: f64) -> Result<Self, VolumeError> {
        if !(start < end) {
            return Err(VolumeError::BadTransferFunction(format!(
                "start {start} must be below end {end}"
            )));
        }
        if !(peak_opacity > 0.0 && peak_opacity <= 1.0) {
            return Err(VolumeError::BadTransferFunction(format!(
                "peak opacity {peak_opacity} outside (0, 1]"
            )));
        }
        Ok(Self {
            start,
            end,
            peak_opacity,
        })
    }

    pub fn eval(&self, v: f64) -> f64 {
        if v <= self.start || v >= self.end {
            return 0.0;
        }
        let mid = (self.start + self.end) / 2.0;
        if v <= mid {
            self.peak_opacity * (v - self.start) / (mid - self.start)
        } else {
            self.peak_opacity * (self.end - v) / (self.end - mid)
        }
    }
}

pub fn eval_tf(tf: &TriangularTF, value: f64) -> f64 {
    tf.eval(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    #[default]
    Viridis,
    Grayscale,
}

const VIRIDIS: [[f64; 3]; 9] = [
    [0.267, 0.005, 0.329],
    [0.283, 0.141, 0.458],
    [0.254, 0.265, 0.530],
    [0.207, 0.372, 0.553],
    [0.164, 0.471, 0.558],
    [0.128, 0.567, 0.551],
    [0.135, 0.659, 0.518],
    [0.267, 0.749, 0.441],
    [0.993, 0.906, 0.144],
];

impl Colormap {
    /// `t` is clamped to [0, 1].
    pub fn map(self, t: f64) -> [f64; 3] {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        match self {
            Colormap::Grayscale => [t; 3],
            Colormap::Viridis => {
                let x = t * (VIRIDIS.len() - 1) as f64;
                let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
                let f = x - i as f64;
                let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
                [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
    pub width: u32,
    pub height: u32,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Ray directions for every pixel of a camera.
#[derive(Debug, Clone, Copy)]
pub struct RayGen {
    eye: [f64; 3],
    forward: [f64; 3],
    right: [f64; 3],
    up: [f64; 3],
    tan_half: f64,
    width: u32,
    height: u32,
}

impl RayGen {
    pub fn origin(&self) -> [f64; 3] {
        self.eye
    }

    /// Unit direction through the centre of pixel (x, y); y grows downward.
    pub fn dir(&self, x: u32, y: u32) -> [f64; 3] {
        let aspect = self.width as f64 / self.height as f64;
        let sx = (2.0 * (x as f64 + 0.5) / self.width as f64 - 1.0) * self.tan_half * aspect;
        let sy = (1.0 - 2.0 * (y as f64 + 0.5) / self.height as f64) * self.tan_half;
        unit([0, 1, 2].map(|a| self.forward[a] + sx * self.right[a] + sy * self.up[a]))
    }
}

impl Camera {
    /// Looks at the volume centre from the −z side, far enough to frame it.
    pub fn for_volume(vol: &VolumeDataset, width: u32, height: u32) -> Self {
        let ext = vol.extent();
        let center = ext.map(|e| e / 2.0);
        let reach = ext.iter().cloned().fold(0.0, f64::max) * 2.5;
        Self {
            eye: [center[0], center[1], center[2] - reach],
            look_at: center,
            up: [0.0, 1.0, 0.0],
            fov_deg: 45.0,
            width,
            height,
        }
    }

    pub fn rays(&self) -> Result<RayGen, VolumeError> {
        let f = sub(self.look_at, self.eye);
        if norm(f) < 1e-12 {
            return Err(VolumeError::BadCamera("eye equals look_at".into()));
        }
        let forward = unit(f);
        let r = cross(forward, self.up);
        if norm(r) < 1e-9 * norm(self.up).max(1e-300) {
            return Err(VolumeError::BadCamera("up is parallel to the view direction".into()));
        }
        let right = unit(r);
        let up = cross(right, forward);
        if self.width == 0 || self.height == 0 {
            return Err(VolumeError::BadCamera("image size must be positive".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(VolumeError::BadCamera(format!("fov {} outside (0, 180)", self.fov_deg)));
        }
        Ok(RayGen {
            eye: self.eye,
            forward,
            right,
            up,
            tan_half: (self.fov_deg.to_radians() / 2.0).tan(),
            width: self.width,
            height: self.height,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Sample spacing as a fraction of the smallest voxel spacing.
    pub step_factor: f64,
    pub termination: f64,
    pub background: [u8; 3],
    pub colormap: Colormap,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            step_factor: 0.5,
            termination: 0.99,
            background: [0, 0, 0],
            colormap: Colormap::Viridis,
        }
    }
}

/// Ray parameter interval inside the box `[0, ext)`, if any.
pub fn box_interval(o: [f64; 3], d: [f64; 3], ext: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < 0.0 || o[a] >= ext[a] {
                return None;
            }
        } else {
            let ta = (0.0 - o[a]) / d[a];
            let tb = (ext[a] - o[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t0 < t1 && t1 > 0.0).then_some((t0.max(0.0), t1))
}

/// Everything the renderer knows per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeFrame {
    pub image: Image,
    /// Composited alpha before early termination snaps it to 1.
    pub accumulated: Vec<f64>,
    /// Alpha written to the image (1 where the ray terminated early).
    pub alpha: Vec<f64>,
    /// `shares[s][pixel]`: alpha composited from structure `s`.
    pub shares: Vec<Vec<f64>>,
    /// `silhouette[s][pixel]`: the ray passed through structure `s`.
    pub silhouette: Vec<Vec<bool>>,
}

struct Pixel {
    rgb: [f64; 3],
    accumulated: f64,
    alpha: f64,
}

pub fn render_volume_frame(
    vol: &VolumeDataset,
    tf: &TriangularTF,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<VolumeFrame, VolumeError> {
    let rays = camera.rays()?;
    let (w, h) = (camera.width as usize, camera.height as usize);
    let ns = vol.structures.len();
    let ext = vol.extent();
    let step = settings.step_factor * vol.spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let (vmin, vmax) = vol.value_range;
    let span = if vmax > vmin { vmax - vmin } else { 1.0 };
    let dims = vol.dims.map(|d| d as isize);
    let o = rays.origin();

    let rows: Vec<(Vec<Pixel>, Vec<f64>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut pixels = Vec::with_capacity(w);
            let mut shares = vec![0.0; w * ns];
            let mut sil = vec![false; w * ns];
            for x in 0..w {
                let d = rays.dir(x as u32, y as u32);
                let mut c = [0.0; 3];
                let mut a = 0.0;
                let mut done = false;
                if let Some((t0, t1)) = box_interval(o, d, ext) {
                    let mut k = (t0 / step).ceil() as i64;
                    loop {
                        let t = k as f64 * step;
                        if t >= t1 {
                            break;
                        }
                        k += 1;
                        let p = [0, 1, 2].map(|i| o[i] + t * d[i]);
                        let idx = [0, 1, 2].map(|i| (p[i] / vol.spacing[i]).floor() as isize);
                        if (0..3).any(|i| idx[i] < 0 || idx[i] >= dims[i]) {
                            continue;
                        }
                        let vi = vol.index(idx[0] as usize, idx[1] as usize, idx[2] as usize);
                        let label = vol.labels.as_ref().map_or(0, |l| l[vi]) as usize;
                        if label > 0 {
                            sil[x * ns + label - 1] = true;
                        }
                        if done {
                            if ns == 0 {
                                break;
                            }
                            continue;
                        }
                        let v = vol.voxels[vi] as f64;
                        let alpha = tf.eval(v);
                        if alpha <= 0.0 {
                            continue;
                        }
                        let weight = (1.0 - a) * alpha;
                        let col = settings.colormap.map((v - vmin) / span);
                        for i in 0..3 {
                            c[i] += weight * col[i];
                        }
                        a += weight;
                        if label > 0 {
                            shares[x * ns + label - 1] += weight;
                        }
                        if a >= settings.termination {
                            done = true;
                        }
                    }
                }
                let (rgb, alpha) = if done { (c.map(|v| v / a), 1.0) } else { (c, a) };
                pixels.push(Pixel {
                    rgb,
                    accumulated: a,
                    alpha,
                });
            }
            (pixels, shares, sil)
        })
        .collect();

    let mut data = Vec::with_capacity(w * h * 4);
    let mut accumulated = Vec::with_capacity(w * h);
    let mut alpha = Vec::with_capacity(w * h);
    let mut shares = vec![vec![0.0; w * h]; ns];
    let mut silhouette = vec![vec![false; w * h]; ns];
    for (y, (pixels, row_shares, row_sil)) in rows.into_iter().enumerate() {
        for (x, px) in pixels.into_iter().enumerate() {
            for i in 0..3 {
                let bg = settings.background[i] as f64 / 255.0;
                let v = px.rgb[i] + bg * (1.0 - px.alpha);
                data.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
            }
            data.push(255);
            accumulated.push(px.accumulated);
            alpha.push(px.alpha);
            for s in 0..ns {
                shares[s][y * w + x] = row_shares[x * ns + s];
                silhouette[s][y * w + x] = row_sil[x * ns + s];
            }
        }
    }
    Ok(VolumeFrame {
        image: Image::from_raw(camera.width, camera.height, data).expect("sized above"),
        accumulated,
        alpha,
        shares,
        silhouette,
    })
}

/// Reduces per-pixel shares to per-structure stats:
///
/// - `silhouette_coverage`: silhouette pixels where the structure contributes
///   over silhouette pixels,
/// - `mean_share`: mean contribution over those contributing pixels,
/// - `occluder_share`: mean over silhouette pixels of everything else's alpha.
pub fn structure_stats(vol: &VolumeDataset, frame: &VolumeFrame) -> BTreeMap<String, StructureStat> {
    let mut out = BTreeMap::new();
    for (s, name) in vol.structures.iter().enumerate() {
        let (mut n, mut contributing, mut share_sum, mut occ_sum) = (0u64, 0u64, 0.0, 0.0);
        for p in 0..frame.accumulated.len() {
            if !frame.silhouette[s][p] {
                continue;
            }
            n += 1;
            let share = frame.shares[s][p];
            if share > 0.0 {
                contributing += 1;
                share_sum += share;
            }
            occ_sum += (frame.accumulated[p] - share).max(0.0);
        }
        let stat = StructureStat {
            silhouette_coverage: if n > 0 { contributing as f64 / n as f64 } else { 0.0 },
            mean_share: if contributing > 0 { share_sum / contributing as f64 } else { 0.0 },
            occluder_share: if n > 0 { occ_sum / n as f64 } else { 0.0 },
            silhouette_pixels: n,
        };
        out.insert(name.clone(), stat);
    }
    out
}

/// Renders an image and, when the volume carries masks, structure stats.
pub fn render_volume(
    vol: &VolumeDataset,
    tf: &TriangularTF,
    camera: &Camera,
    settings: &RenderSettings,
) -> Result<(Image, Option<BTreeMap<String, StructureStat>>), VolumeError> {
    let frame = render_volume_frame(vol, tf, camera, settings)?;
    let stats = (!vol.structures.is_empty()).then(|| structure_stats(vol, &frame));
    Ok((frame.image, stats))
}
