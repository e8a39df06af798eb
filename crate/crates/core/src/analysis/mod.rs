//! Mechanistic metrics over recorded traces and the statistics behind them.

pub mod alpha;
pub mod gmm;
pub mod logit;
pub mod overlap;
pub mod precision;
pub mod stats;

pub use alpha::{alpha_deviation_summary, AlphaDeviation};
pub use gmm::{gmm_crossover, gmm_fit, stable_crossover, Component, GmmFit, GMM_MAX_ITERS};
pub use logit::{causal_ordering, compare_lists, logit_dynamics_cross, logit_dynamics_within, LogitRecord, OrderClass};
pub use overlap::{
    basin_labels, l2_delta_profile, layer_profile, overlap_grid, position_labels, topk_overlap, Band, OverlapGrid,
    PositionRule,
};
pub use precision::{alpha_premise, precision_floor_test, precision_ratio};
pub use stats::{
    binomial_tail, fisher_exact_2x2, mann_whitney_u, mcnemar_chi2, mcnemar_exact, odds_ratio, wilson_ci, PValue,
};
