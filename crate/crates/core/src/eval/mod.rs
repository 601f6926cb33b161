//! Condition harness, AUC and result reporting.

mod auc;
mod condition;
mod harness;
mod report;

pub use auc::auc;
pub use condition::{
    all_conditions, build_condition, ConditionSpec, Pool, SkillRule, DEFAULT_N_INPUT,
};
pub use harness::{
    mean_stderr, Draw, EvalResult, Harness, LatentPredictor, OffTargetMode, OraclePredictor,
    ResponsePredictor,
};
pub use report::{
    plot_data, read_results_csv, report, write_results_csv, PlotPanel, PlotSeries, ResultRow,
};
