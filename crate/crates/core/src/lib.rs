pub mod channel;
pub mod error;
pub mod geometry;
pub mod kernel;
pub mod scenario;
pub mod placement;
pub mod bandwidth;
pub mod association;
pub mod orchestrator;
pub mod audit;
pub mod evaluation;
pub mod config;

pub use audit::{audit, AuditReport, Constraint, Violation};
pub use channel::ChannelParams;
pub use config::Config;
pub use error::{Error, Result};
pub use evaluation::{
    empirical_cdf, interference_rates, run_monte_carlo, ExperimentConfig, InterferenceMode, MetricsTable,
};
pub use geometry::{Point2, Point3};
pub use orchestrator::{baseline, optimize, total_power, InfeasibilityPolicy, InitialPlacement, Solution, SolverConfig};
pub use scenario::{compute_cov, PointProcessConfig, Scenario, ScenarioSpec, User};
