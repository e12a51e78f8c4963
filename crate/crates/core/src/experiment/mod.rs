//! Sweep orchestration: configuration, execution over
//! `trials x topologies x ε` with checkpointed horizons, and CSV output.

mod config;
mod output;
mod sweep;

pub use config::{parse_config, parse_config_str, SweepConfig, CONFIG_KEYS};
pub use output::{emit_csv, format_float, ROWS_HEADER, SUMMARY_HEADER};
pub use sweep::{run_sweep, CellStats, SummaryRow, SweepResult, SweepRow};
