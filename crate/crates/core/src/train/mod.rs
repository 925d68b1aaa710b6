//! Toy-scale adversarial training, the scale-consistency objective and W+
//! projection.

pub mod disc;
pub mod loss;
pub mod project;
pub mod step;

pub use disc::{r1_penalty, DiscConfig, DiscParams};
pub use loss::{d_loss, g_loss};
pub use project::{project, ProjectConfig, Projection};
pub use step::{moving_average, ScMode, StepRecord, TrainConfig, Trainer};
