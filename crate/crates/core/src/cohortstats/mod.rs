//! Cohort morphometry statistics: group summaries, hypothesis tests,
//! correlation, method-agreement analysis, the height-normalized muscle
//! index, and penalized-spline trend curves.

mod agreement;
mod hypothesis;
mod special;
mod spline;
mod summary;

pub use agreement::{bland_altman, BlandAltmanResult};
pub use hypothesis::{pearson_test, t_test_one_sample, t_test_two_sample, TestResult};
pub use special::{ln_gamma, regularized_incomplete_beta, student_t_two_sided_p};
pub use spline::{gam_fit, GamFit};
pub use summary::{
    cohort_summary, format_p, imi, CohortRow, GroupSummary, MetricStats, StatsReport,
    VOLUME_METRICS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}
