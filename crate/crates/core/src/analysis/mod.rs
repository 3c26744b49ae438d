//! Session analysis: activity and wealth, skewness under aggregation,
//! synchronization of trading, co-position clusters and expectation fits.

mod activity;
mod fdr;
mod forecast;
mod report;
mod skew;
mod sync;

use thiserror::Error;

pub use activity::{activity_rate, position_matrix, wealth_activity_correlation, ActivityMatrix, ActivityVariant};
pub use fdr::{benjamini_hochberg, fdr_clusters, ClusterSet, Link, DEFAULT_FDR};
pub use forecast::{
    compare_fit_distributions, expectation_tails, fit_all_forecasts, fit_forecasts, fit_observations,
    forecast_observations, ActionState, FitParam, ForecastFit, ForecastObs, PairTest, TailSide, MIN_FIT_OBS,
};
pub use report::{
    analyze_session, analyze_sessions, summarize, write_report, AnalysisOptions, AnalysisReport, LabeledSync,
    PooledSync, SessionReport, SessionSummary, TraderSummary,
};
pub use skew::{average_curves, median_skew, prob_skew, skewness_curve, skewness_curve_from_returns, SeriesLabel, SkewCurve, DEFAULT_TAUS};
pub use sync::{
    activity_covariance, conditional_sync, null_overlaps, overlap_statistic, sync_overlap, ReturnSign, SyncReport,
    DEFAULT_NULL_REPLICATES,
};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("undefined: {0}")]
    Degenerate(String),
    #[error("unknown trader {0}")]
    UnknownTrader(usize),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
