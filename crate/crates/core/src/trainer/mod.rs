pub mod data;
pub mod forward;
pub mod optim;
pub mod scan;
pub mod train;

pub use data::{copy_task, Batch, Dataset, Example};
pub use forward::{
    loss_and_grads, loss_rows, loss_value, masked_ce_loss, sequential_forward, two_pass_forward, PathOutput, TrainPath,
};
pub use optim::{AdamW, OptimConfig, StepInfo};
pub use scan::{associative_scan, shift_right};
pub use train::{alphas_in_bounds, mean_loss, train, TrainConfig, TrainReport};
