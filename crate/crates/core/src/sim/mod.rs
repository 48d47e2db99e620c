//! GI/GI/n simulation in original (FCFS, idling) and modified (virtual jobs)
//! modes, with exact time integrals and Palm event averages.
//!
//! Simultaneous events fire arrival first, then completions by ascending
//! server index; residuals within `1e-12·max(1, t)` of the next epoch count as
//! simultaneous. Every purpose draws from its own seeded stream, see
//! [`crate::rng`].

mod coupling;
mod engine;
mod log;
mod model;
mod output;

pub use coupling::{run_coupled_dominance, run_coupled_dominance_from, DominanceReport};
pub use engine::{EventKind, EventRecord, InitError, Observer, RecordAll, SimState, Simulation};
pub use log::{queue_length_formula, queue_length_oracle, EventLog, OracleError};
pub use model::{InitConfig, Mode, ModelError, QueueModel, ResidualInit, Routing};
pub use output::{
    cell_index, run, run_replications, BatchStats, CellSums, ClassSums, RunConfig, RunError, SimOutput, TimeSums, CELL_NAMES,
};
