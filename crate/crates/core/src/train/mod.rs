//! Training: configuration, schedules, the optimizer, and the step loop.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod driver;
pub mod schedule;
pub mod state;
pub mod step;

pub use adam::{Adam, AdamHyper};
pub use checkpoint::{load_checkpoint, save_checkpoint, PARAMS_FILE, STATE_FILE};
pub use driver::{
    e1_stats_for, run_training, TrainSummary, CONFIG_SNAPSHOT, LOSS_LOG, SOURCE_DOMAIN,
    TARGET_DOMAIN,
};
pub use config::{AblationMode, TrainConfig};
pub use schedule::{lr_at, robust_factor, robust_loss_active};
pub use state::{E1Stats, TrainState};
pub use step::{discriminator_update, generator_update, train_step, LossReport};
