//! Training schemes: primal-dual learning and the supervised and
//! self-supervised baselines.

mod baseline;
mod common;
mod config;
mod losses;
mod model;
mod pdl;

pub use baseline::baseline_train;
pub use config::{BaselineConfig, Budget, Norm, PdlConfig, PenaltyConfig, Scheme};
pub use losses::{
    dual_loss_pdl, dual_targets, ld_update, naive_supervised_loss, penalty_terms, primal_loss_pdl,
    squared_penalty_loss, ssl_penalty_loss, supervised_penalty_loss,
};
pub use model::{round_to_sign, write_trace_csv, SchemeConfig, TraceRow, TrainedModel};
pub use pdl::{pdl_train, PdlTrainer};

#[cfg(test)]
mod tests;
