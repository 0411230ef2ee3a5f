//! Dense networks, the Adam optimizer and validation-driven learning-rate decay.

mod adam;
mod checkpoint;
mod mlp;
mod schedule;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, CHECKPOINT_VERSION};
pub use mlp::{BoundMlp, Dense, Mlp, OutputHead};
pub use schedule::LrSchedule;
