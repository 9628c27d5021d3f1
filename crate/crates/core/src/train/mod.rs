//! Training: Adam optimization, the alternating critic/generator loop, the
//! proxy feature extractor, and per-epoch validation.

mod adam;
mod history;
mod proxy;
mod trainer;
mod validate;

pub use adam::{adam_step, AdamState};
pub use history::{EpochRecord, History, TrainCounters};
pub use proxy::{bind_frozen, train_proxy_extractor, ProxyConfig};
pub use trainer::{load_params_from_file, train, TrainConfig, TrainOutcome};
pub use validate::{validate, ValidationStats};

#[cfg(test)]
mod tests;
