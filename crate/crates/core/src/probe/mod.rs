//! Adaptive halting probe: a bottleneck MLP over a position-0 hidden state
//! deciding whether further iterations would break a correct answer.

mod ablation;
mod labels;
mod model;
mod training;

pub use ablation::{
    decision_profile, effective_direction, importance, input_dim_ablation, minimal_top_k_linear, AblationReport,
    DirectionReport,
};
pub use labels::{build_labels, ProbeItem};
pub use model::{ProbeModel, HALT_THRESHOLD};
pub use training::{
    default_evaluator, loocv, must_halt_questions, probe_driven_generate, select_layer, train_probe, LayerResult,
    LoocvReport, ProbePolicy, ProbeTrainConfig,
};
