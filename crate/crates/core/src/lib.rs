//! Channel model, performance metrics and block-coordinate optimizer for a
//! downlink cell-free optical wireless network aided by a mirror-array
//! reflecting surface on one of the room's walls.

pub mod channel;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod orchestrator;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod solvers;

pub use channel::{build_channel_state, ChannelModel, ChannelState, OrientationSet};
pub use error::{Error, Result};
pub use geometry::{PlaneTag, RoomBounds, Vec3, WallPlane};
pub use metrics::{AllocationMatrix, MetricsReport, PowerAllocation};
pub use scenario::{reference_scenario, validate_scenario, Scenario};
pub use solvers::SolverOptions;
pub use orchestrator::{
    baseline_run, compute_r_max, default_init, pareto_front, pareto_sweep, power_sweep,
    run_algorithm1, BaselineMode, IterateTrace, ParetoPoint, RunOutcome, SolutionState,
};
