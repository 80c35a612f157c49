//! Synthetic volumes with ground-truth structure masks.

use std::collections::BTreeMap;

use ava_render::volren::{VolumeDataset, VolumeError, VoxelType};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum PhantomError {
    #[error("bands of `{0}` and `{1}` overlap")]
    OverlappingBands(String, String),
    #[error("invalid phantom: {0}")]
    Invalid(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

/// Region in normalized coordinates: each axis runs over [0, 1] across the
/// volume, voxel centres at `(i + 0.5) / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Points with `inner <= r < outer`.
    Shell { center: [f64; 3], inner: f64, outer: f64 },
    Cuboid { min: [f64; 3], max: [f64; 3] },
    All,
}

impl Shape {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let dist = |c: [f64; 3]| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
        match self {
            Shape::Sphere { center, radius } => dist(*center) < *radius,
            Shape::Shell { center, inner, outer } => {
                let r = dist(*center);
                *inner <= r && r < *outer
            }
            Shape::Cuboid { min, max } => (0..3).all(|a| min[a] <= p[a] && p[a] < max[a]),
            Shape::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub name: String,
    pub shape: Shape,
    /// Inclusive integer value band the structure's voxels are drawn from.
    pub band: (u16, u16),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    /// Later structures are painted over earlier ones.
    pub structures: Vec<StructureSpec>,
    /// Declared value range; defaults to the 8-bit range.
    #[serde(default = "full_range")]
    pub value_range: (f64, f64),
    #[serde(default)]
    pub seed: u64,
}

fn full_range() -> (f64, f64) {
    (0.0, 255.0)
}

impl PhantomSpec {
    pub fn new(dims: [usize; 3], structures: Vec<StructureSpec>) -> Self {
        Self {
            dims,
            structures,
            value_range: full_range(),
            seed: 0,
        }
    }

    /// An outer shell around an inner sphere, like an object inside a
    /// container.
    pub fn nested(n: usize, shell_band: (u16, u16), inner_band: (u16, u16)) -> Self {
        let c = [0.5; 3];
        Self::new(
            [n; 3],
            vec![
                StructureSpec {
                    name: "outer".into(),
                    shape: Shape::Shell { center: c, inner: 0.32, outer: 0.45 },
                    band: shell_band,
                },
                StructureSpec {
                    name: "inner".into(),
                    shape: Shape::Sphere { center: c, radius: 0.2 },
                    band: inner_band,
                },
            ],
        )
    }
}

/// Paints each structure with values drawn uniformly (seeded) from its band
/// over a background of 0 and records one mask per structure.
pub fn gen_volume_phantom(spec: &PhantomSpec) -> Result<VolumeDataset, PhantomError> {
    if spec.dims.iter().any(|&d| d == 0) {
        return Err(PhantomError::Invalid(format!("dims {:?}", spec.dims)));
    }
    let (lo, hi) = spec.value_range;
    for (i, s) in spec.structures.iter().enumerate() {
        if s.band.0 > s.band.1 || s.band.0 == 0 || (s.band.1 as f64) > hi || (s.band.0 as f64) < lo {
            return Err(PhantomError::Invalid(format!(
                "band {:?} of `{}` must be nonzero, ordered and inside [{lo}, {hi}]",
                s.band, s.name
            )));
        }
        for t in &spec.structures[..i] {
            if s.name == t.name {
                return Err(PhantomError::Invalid(format!("duplicate structure `{}`", s.name)));
            }
            if s.band.0 <= t.band.1 && t.band.0 <= s.band.1 {
                return Err(PhantomError::OverlappingBands(t.name.clone(), s.name.clone()));
            }
        }
    }
    let [nx, ny, nz] = spec.dims;
    let n = nx * ny * nz;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut voxels = vec![0u16; n];
    let mut owner = vec![usize::MAX; n];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = [
                    (x as f64 + 0.5) / nx as f64,
                    (y as f64 + 0.5) / ny as f64,
                    (z as f64 + 0.5) / nz as f64,
                ];
                let i = x + nx * (y + ny * z);
                for (k, s) in spec.structures.iter().enumerate() {
                    if s.shape.contains(p) {
                        owner[i] = k;
                    }
                }
                if let Some(s) = spec.structures.get(owner[i]) {
                    voxels[i] = rng.random_range(s.band.0..=s.band.1);
                }
            }
        }
    }
    let vt = if hi > 255.0 { VoxelType::U16 } else { VoxelType::U8 };
    let masks: BTreeMap<String, Vec<bool>> = spec
        .structures
        .iter()
        .enumerate()
        .map(|(k, s)| (s.name.clone(), owner.iter().map(|&o| o == k).collect()))
        .collect();
    let mut vol = VolumeDataset::new(spec.dims, vt, [1.0; 3], voxels)?;
    if !masks.is_empty() {
        vol = vol.with_masks(masks)?;
    }
    Ok(vol.with_value_range(lo, hi)?)
}
