//! Optimality gaps, constraint violations and table-style reports.

mod metrics;
mod report;

pub use metrics::{gap_or_absolute, optimality_gap, violations, Violations};
pub use report::{
    best_of, evaluate, evaluate_best_of, method_type, write_table_csv, Aggregates, EvalReport, InstanceRecord,
    TABLE_HEADER,
};
