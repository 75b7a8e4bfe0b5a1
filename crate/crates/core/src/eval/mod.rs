//! Metrics, synthetic data and the strategy benchmark.

mod benchmark;
mod metrics;
mod synthetic;

pub use benchmark::{
    evaluate, mean_std, run_benchmark, BenchmarkConfig, EvalReport, SeedRecord, Strategy, StrategyAccuracy,
    StrategyReport,
};
pub use metrics::{accuracy, class_reports, confusion_counts, metrics, ClassMetrics, ClassReport, ConfusionCounts};
pub use synthetic::{class_means, gen_synthetic, stratified_split, synthetic_classes, SyntheticConfig};
