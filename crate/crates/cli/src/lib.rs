pub mod config;
pub mod pipeline;
pub mod report;
pub mod stage;

pub use config::{ConfigError, ExperimentConfig};
pub use pipeline::{Pipeline, STAGES};
pub use stage::Stage;
