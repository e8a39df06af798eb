pub mod cache;
pub mod config;
pub mod graph;
pub mod lipschitz;
pub mod params;
pub mod stack;

pub use cache::{KvCache, LatentStateCache};
pub use config::{Mode, ModelConfig};
pub use lipschitz::{ffn_lipschitz, ffn_lipschitz_bound, LipschitzReport};
pub use params::{is_stream_param, LayerWeights, ModelWeights, SstParams};
pub use stack::{alpha_from_logits, blend, SstModel, StepRecord};
