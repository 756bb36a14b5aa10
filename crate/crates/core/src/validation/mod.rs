//! Evaluation protocol: two scenarios (same-day interpolation and next-day
//! forecast) crossed with two validation targets (held-out low-cost sensors
//! and reference stations), four indicators per fold.

mod benchmark;
mod folds;
mod report;

pub use benchmark::{run_benchmark, run_estimators, tune_models, BenchmarkConfig, BenchmarkDays, Estimator, FitOutcome};
pub use folds::{assert_no_leakage, make_folds, Fold, FoldPlan, PlanKind, Scenario, ScenarioKind};
pub use report::{aggregate, md_num, Aggregate, EvaluationReport, FoldResult, MeanMetrics, CSV_HEADER};
