//! Augmented Lagrangian method used as the reference solver.

mod config;
mod lagrangian;
mod ncg;
mod solve;

pub use config::AlmConfig;
pub use lagrangian::{augmented_lagrangian, augmented_lagrangian_value, dual_update, update_rho, violation};
pub use ncg::{minimize, NcgResult};
pub use solve::{
    alm_multistart, alm_solve, alm_solve_all, inner_solve, max_violation, random_start, write_trace_csv, AlmOutcome,
    AlmState, AlmTraceRow,
};
