//! Configuration-driven experiment runner behind the `pdplan` binary.

mod commands;
pub mod config;
pub mod output;

pub use commands::{
    cmd_compare, cmd_ring, cmd_simulate, cmd_solve, load_context, parse_replay, CompareRow, Context, Overrides,
    RingPair, SimulateSummary, SolveSummary,
};
pub use config::RunConfig;
