//! Memory-budgeted block-wise precomputation.
//!
//! The edge list of `Ã` (and later of `S`) is cut into contiguous, balanced,
//! disjoint blocks; features are cut into column blocks. Every block
//! operation goes through an [`Executor`], which stands in for the device
//! and refuses any operation whose estimated footprint exceeds the budget.

mod aggregate;
mod budget;
mod calibrate;
mod executor;
mod lcpf;

pub use aggregate::{
    block_feature_aggregation, block_normalize, column_ranges, dataset_hash, split_edges, EdgeBlockSet,
    PrecomputedFeatures,
};
pub use budget::{
    plan_for_problem, solve_agg_blocks, solve_norm_blocks, BudgetModel, Coefficients, DecompositionPlan, PlanReport,
    ProblemSize, VolumeModel,
};
pub use calibrate::{calibrate_budget, Calibration, LinearFit};
pub use executor::{ExecStats, Executor, HostExecutor, MemoryUsage};
pub use lcpf::{read_lcpf, write_lcpf, LCPF_MAGIC, LCPF_VERSION};

use crate::graph::GraphError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlockError {
    #[error("{op} block needs an estimated {estimate:.1} bytes but the budget is {budget:.1}")]
    BudgetExceeded {
        op: &'static str,
        estimate: f64,
        budget: f64,
    },
    #[error("infeasible budget: {0}")]
    Infeasible(String),
    #[error("invalid budget model: {0}")]
    InvalidBudget(String),
    #[error("calibration unstable: {0}")]
    CalibrationUnstable(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
