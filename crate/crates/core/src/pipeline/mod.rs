//! Config-driven experiments: preprocess, encode, train, fuse and report
//! over several splits and master seeds.

mod config;
mod features;
mod report;
mod run;

pub use config::{
    default_levels, parse_level_list, Paths, PoolingOptions, ReportOptions, RunConfig, SplitDef,
    CONFIG_VERSION,
};
pub use features::{level_features, FeatureSet};
pub use report::{
    reseed_table, summarize, ConfusionEntry, LevelTag, ReseedRow, ResultRow, RunReport, Spread,
    Stream, SummaryRow,
};
pub use run::{
    pooling_ablation, reseed_stability, run_experiment, AblationReport, AblationRow, Pipeline,
    StabilityReport, StabilityRow,
};
