//! Run configuration, initial data, snapshots and checkpoints.

pub mod config;
pub mod expr;
pub mod snapshot;

pub use config::{load_config, make_initial, parse_config, random_field, ConfigError, Forcing, InitialSpec, RunConfig};
pub use expr::{eval_constant, Expr, ExpressionError};
pub use snapshot::{
    read_checkpoint, read_snapshot, write_checkpoint, write_snapshot, Checkpoint, Header, Snapshot,
    SnapshotFormatError,
};
