//! Metrics, the AIC grid search and the controller comparison.

pub mod compare;
pub mod grid;
pub mod metrics;

pub use compare::{fit_a2rl, report, train_controllers, CompareReport, Controller, ControllerSet, TrainedNetwork};
pub use grid::{grid_search, select_best, GridCell, GridResult, GridSpec};
pub use metrics::{aic, error_stats, fvu, mse, rmse_deg, ErrorStats, Metrics};
