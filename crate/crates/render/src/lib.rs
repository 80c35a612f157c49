//! Renderers used as built-in visualization tools: a software volume ray
//! caster and 2-D charts. Both return side-channel measurements that the
//! oracle perceptions read.

pub mod charts;
pub mod font;
pub mod volren;

pub use charts::{
    fr_layout, render_node_link, render_parallel_coords, render_scatter, Canvas, ChartError,
    CoverageBuffer, DrawStats, Graph, PointSet,
};
pub use volren::{
    compute_histogram, eval_tf, load_raw, load_volume, render_volume, render_volume_frame,
    structure_stats, Camera, Colormap, Histogram, RenderSettings, TriangularTF, VolumeDataset,
    VolumeError, VolumeFrame, VoxelType,
};
