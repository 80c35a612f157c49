//! Perception benchmark: seeded chart and volume cases with exact answers,
//! prompt templates, scoring and success-rate tables.

pub mod cases;
pub mod phantom;
pub mod runner;
pub mod scoring;

pub use cases::{gen_case, BenchCase, CaseError, CaseParams, GroundTruth, Task};
pub use phantom::{gen_volume_phantom, PhantomError, PhantomSpec, Shape, StructureSpec};
pub use runner::{
    run_benchmark, BenchPerception, BenchReport, FixedAnswer, GroundTruthStub, ModelPerception, ReportRow,
    RunOptions, Transcript, Trial, DEFAULT_TRIALS,
};
