//! Cohort summary tables: per-sex descriptive statistics of the measured
//! volumes, between-sex comparisons, the covariate correlations, the
//! left-right asymmetry test, and the handedness association check.

use super::hypothesis::{mean, pearson_test, t_test_one_sample, t_test_two_sample, TestResult};
use super::StatsError;
use crate::phantom::{Handedness, Sex, SubjectRecord};
use serde::Serialize;

/// Muscle index: total volume over height squared, in ml/m^2.
pub fn imi(total_ml: f64, height_cm: f64) -> Result<f64, StatsError> {
    if !(height_cm.is_finite() && height_cm > 0.0) {
        return Err(StatsError::InvalidArgument(format!(
            "height must be positive, got {height_cm}"
        )));
    }
    let h_m = height_cm / 100.0;
    Ok(total_ml / (h_m * h_m))
}

/// P-values below 1e-15 are reported as a band.
pub fn format_p(p: f64) -> String {
    if p < 1e-15 {
        "<1e-15".to_string()
    } else {
        p.to_string()
    }
}

/// One analyzed subject: covariates plus measured volumes. The derived
/// quantities (total, average, left-right difference, index) are computed
/// on demand so their defining identities hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortRow {
    pub id: String,
    #[serde(serialize_with = "ser_sex")]
    pub sex: Sex,
    pub age: u32,
    pub height_cm: f64,
    pub weight_kg: f64,
    pub bmi: f64,
    #[serde(serialize_with = "ser_hand")]
    pub handedness: Handedness,
    pub left_ml: f64,
    pub right_ml: f64,
}

fn ser_sex<S: serde::Serializer>(v: &Sex, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.as_str())
}

fn ser_hand<S: serde::Serializer>(v: &Handedness, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(v.as_str())
}

impl CohortRow {
    /// Rows measured from ground-truth planted volumes.
    pub fn from_truth(subject: &SubjectRecord) -> Self {
        Self::from_volumes(subject, subject.true_left_ml, subject.true_right_ml)
    }

    pub fn from_volumes(subject: &SubjectRecord, left_ml: f64, right_ml: f64) -> Self {
        Self {
            id: subject.id.clone(),
            sex: subject.sex,
            age: subject.age,
            height_cm: subject.height_cm,
            weight_kg: subject.weight_kg,
            bmi: subject.bmi,
            handedness: subject.handedness,
            left_ml,
            right_ml,
        }
    }

    pub fn total_ml(&self) -> f64 {
        self.left_ml + self.right_ml
    }

    pub fn average_ml(&self) -> f64 {
        self.total_ml() / 2.0
    }

    /// left minus right (negative when the right muscle is larger)
    pub fn lr_diff_ml(&self) -> f64 {
        self.left_ml - self.right_ml
    }

    pub fn imi(&self) -> f64 {
        imi(self.total_ml(), self.height_cm).expect("validated height")
    }
}

/// Mean, SD (absent for singleton groups), and range of one metric.
#[derive(Debug, Clone, Serialize)]
pub struct MetricStats {
    pub mean: f64,
    pub sd: Option<f64>,
    pub min: f64,
    pub max: f64,
}

fn metric_stats(values: &[f64]) -> MetricStats {
    let m = mean(values);
    let sd = if values.len() >= 2 {
        Some(super::hypothesis::variance(values).sqrt())
    } else {
        None
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    MetricStats { mean: m, sd, min, max }
}

pub const VOLUME_METRICS: [&str; 6] = [
    "total_ml",
    "average_ml",
    "left_ml",
    "right_ml",
    "lr_diff_ml",
    "imi_ml_per_m2",
];

/// Descriptive statistics of one group (one sex).
#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub sex: String,
    pub n: usize,
    pub age: MetricStats,
    pub bmi: MetricStats,
    pub height_cm: MetricStats,
    pub weight_kg: MetricStats,
    /// keyed in VOLUME_METRICS order
    pub volumes: Vec<MetricStats>,
    /// total-vs-height, imi-vs-bmi, imi-vs-age (n >= 3 and non-degenerate)
    pub corr_total_height: Option<TestResult>,
    pub corr_imi_bmi: Option<TestResult>,
    pub corr_imi_age: Option<TestResult>,
    /// one-sample test of left-right difference against zero
    pub lr_diff_test: Option<TestResult>,
    /// two-sample test of the left-right difference by handedness
    pub handedness_test: Option<TestResult>,
}

/// Between-group comparisons and the per-group summaries.
#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub groups: Vec<GroupSummary>,
    /// Welch tests female-vs-male per entry of VOLUME_METRICS
    pub between_sex_tests: Vec<Option<TestResult>>,
}

fn metric_values(rows: &[&CohortRow]) -> [Vec<f64>; 6] {
    [
        rows.iter().map(|r| r.total_ml()).collect(),
        rows.iter().map(|r| r.average_ml()).collect(),
        rows.iter().map(|r| r.left_ml).collect(),
        rows.iter().map(|r| r.right_ml).collect(),
        rows.iter().map(|r| r.lr_diff_ml()).collect(),
        rows.iter().map(|r| r.imi()).collect(),
    ]
}

fn group_summary(sex: Sex, rows: &[&CohortRow]) -> GroupSummary {
    let volumes = metric_values(rows);
    let ages: Vec<f64> = rows.iter().map(|r| r.age as f64).collect();
    let bmis: Vec<f64> = rows.iter().map(|r| r.bmi).collect();
    let heights: Vec<f64> = rows.iter().map(|r| r.height_cm).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.weight_kg).collect();
    let totals = &volumes[0];
    let imis = &volumes[5];
    let lr_diffs = &volumes[4];

    let corr = |x: &[f64], y: &[f64]| pearson_test(x, y).ok();
    let right_diffs: Vec<f64> = rows
        .iter()
        .filter(|r| r.handedness == Handedness::Right)
        .map(|r| r.lr_diff_ml())
        .collect();
    let left_diffs: Vec<f64> = rows
        .iter()
        .filter(|r| r.handedness == Handedness::Left)
        .map(|r| r.lr_diff_ml())
        .collect();

    GroupSummary {
        sex: sex.as_str().to_string(),
        n: rows.len(),
        age: metric_stats(&ages),
        bmi: metric_stats(&bmis),
        height_cm: metric_stats(&heights),
        weight_kg: metric_stats(&weights),
        volumes: volumes.iter().map(|v| metric_stats(v)).collect(),
        corr_total_height: corr(totals, &heights),
        corr_imi_bmi: corr(imis, &bmis),
        corr_imi_age: corr(imis, &ages),
        lr_diff_test: t_test_one_sample(lr_diffs, 0.0).ok(),
        handedness_test: t_test_two_sample(&right_diffs, &left_diffs).ok(),
    }
}

/// Summarize a cohort grouped by sex. Degenerate groups (fewer than two
/// members, or zero-variance inputs) report means without SDs and omit the
/// affected tests.
pub fn cohort_summary(rows: &[CohortRow]) -> Result<StatsReport, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::InvalidArgument("empty cohort".into()));
    }
    let females: Vec<&CohortRow> = rows.iter().filter(|r| r.sex == Sex::Female).collect();
    let males: Vec<&CohortRow> = rows.iter().filter(|r| r.sex == Sex::Male).collect();

    let mut groups = Vec::new();
    for (sex, members) in [(Sex::Female, &females), (Sex::Male, &males)] {
        if !members.is_empty() {
            groups.push(group_summary(sex, members));
        }
    }

    let between_sex_tests = if !females.is_empty() && !males.is_empty() {
        let fv = metric_values(&females);
        let mv = metric_values(&males);
        fv.iter()
            .zip(mv.iter())
            .map(|(f, m)| t_test_two_sample(f, m).ok())
            .collect()
    } else {
        vec![None; VOLUME_METRICS.len()]
    };

    Ok(StatsReport {
        groups,
        between_sex_tests,
    })
}
