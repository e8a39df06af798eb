pub mod eval;
pub mod generate;

pub use eval::{error_correction, flat_depth_report, repetition_metric, staged_compute, FlatReport, PassFailMatrix};
pub use generate::{
    generate, generate_turns, top_k_logprobs, DepthPolicy, Flat, GenerationRun, IterationRecord, PositionRecord,
    Session, TraceSpec,
};
