//! `stats`: summary tables (demographics, volumes, correlations), scatter
//! plots, the age-trend smoother, the Bland-Altman agreement plot of
//! predicted against ground-truth volumes, and a JSON index of everything.

use crate::config::RunConfig;
use crate::svg::{Curve, HLine, Plot, Series, FEMALE_COLOR, MALE_COLOR};
use crate::{paths, CliError};
use muscleseg_core::cohortstats::{
    bland_altman, cohort_summary, format_p, gam_fit, BlandAltmanResult, CohortRow, GamFit,
    StatsReport, TestResult, VOLUME_METRICS,
};
use muscleseg_core::phantom::{Sex, SubjectRecord};
use serde::Serialize;
use std::path::Path;

struct SegmentedRow {
    subject: SubjectRecord,
    predicted_left_ml: f64,
    predicted_right_ml: f64,
}

fn read_segmented(path: &Path) -> Result<Vec<SegmentedRow>, CliError> {
    // base columns parse through the cohort reader; predictions read here
    let subjects = muscleseg_core::phantom::read_cohort_csv(path)?;
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let headers = r
        .headers()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .clone();
    for required in ["predicted_left_ml", "predicted_right_ml"] {
        if !headers.iter().any(|h| h == required) {
            return Err(CliError::Usage(format!(
                "{path:?} is missing column {required:?}; run `muscleseg segment` first"
            )));
        }
    }
    let li = headers
        .iter()
        .position(|h| h == "predicted_left_ml")
        .expect("checked");
    let ri = headers
        .iter()
        .position(|h| h == "predicted_right_ml")
        .expect("checked");
    let mut out = Vec::new();
    for (subject, record) in subjects.into_iter().zip(r.records()) {
        let record = record.map_err(|e| CliError::Usage(e.to_string()))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            record
                .get(i)
                .ok_or_else(|| CliError::Usage("short segmented row".into()))?
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("prediction parse error: {e}")))
        };
        out.push(SegmentedRow {
            subject,
            predicted_left_ml: parse(li)?,
            predicted_right_ml: parse(ri)?,
        });
    }
    Ok(out)
}

fn stat_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn test_p_cell(t: &Option<TestResult>) -> String {
    t.map(|r| format_p(r.p_value)).unwrap_or_else(|| "NA".into())
}

#[derive(Serialize)]
struct JsonIndex<'a> {
    summary: &'a StatsReport,
    bland_altman: &'a BlandAltmanResult,
    gam_age_curves: Vec<JsonCurve>,
    files: Vec<&'static str>,
}

#[derive(Serialize)]
struct JsonCurve {
    sex: String,
    lambda: f64,
    points: Vec<(f64, f64)>,
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let seg_path = paths::segmented_csv(&cfg.workdir);
    paths::require(&seg_path, "muscleseg segment")?;
    let rows = read_segmented(&seg_path)?;
    if rows.is_empty() {
        return Err(CliError::Usage("segmented cohort is empty".into()));
    }

    let measured: Vec<CohortRow> = rows
        .iter()
        .map(|r| CohortRow::from_volumes(&r.subject, r.predicted_left_ml, r.predicted_right_ml))
        .collect();
    let report = cohort_summary(&measured)?;

    // agreement of predicted vs planted ground-truth total volumes
    let truth_totals: Vec<f64> = rows.iter().map(|r| r.subject.true_total_ml()).collect();
    let pred_totals: Vec<f64> = measured.iter().map(|r| r.total_ml()).collect();
    let ba = bland_altman(&truth_totals, &pred_totals)?;

    // age trend of the muscle index, per sex, where the group is large
    // enough for the spline basis
    let mut gam_curves: Vec<(Sex, GamFit)> = Vec::new();
    for sex in [Sex::Female, Sex::Male] {
        let group: Vec<&CohortRow> = measured.iter().filter(|r| r.sex == sex).collect();
        if group.len() > cfg.gam_knots + 2 {
            let ages: Vec<f64> = group.iter().map(|r| r.age as f64).collect();
            let imis: Vec<f64> = group.iter().map(|r| r.imi()).collect();
            if let Ok(fit) = gam_fit(&ages, &imis, cfg.gam_knots) {
                gam_curves.push((sex, fit));
            }
        }
    }

    let dir = paths::stats_dir(&cfg.workdir);
    std::fs::create_dir_all(&dir)?;
    write_demographics(&dir.join("table_demographics.csv"), &report)?;
    write_volumes(&dir.join("table_volumes.csv"), &report)?;
    write_correlations(&dir.join("table_correlations.csv"), &report)?;

    let by_sex = |f: &dyn Fn(&CohortRow) -> (f64, f64)| -> Vec<Series> {
        [(Sex::Female, FEMALE_COLOR), (Sex::Male, MALE_COLOR)]
            .into_iter()
            .map(|(sex, color)| Series {
                name: sex.as_str().to_string(),
                color: color.to_string(),
                points: measured
                    .iter()
                    .filter(|r| r.sex == sex)
                    .map(|r| f(r))
                    .collect(),
            })
            .collect()
    };

    Plot {
        title: "Total muscle volume by height".into(),
        x_label: "height (cm)".into(),
        y_label: "total volume (ml)".into(),
        series: by_sex(&|r| (r.height_cm, r.total_ml())),
        curves: vec![],
        hlines: vec![],
    }
    .write(&dir.join("volume_vs_height.svg"))?;

    Plot {
        title: "Muscle index by BMI".into(),
        x_label: "BMI (kg/m2)".into(),
        y_label: "muscle index (ml/m2)".into(),
        series: by_sex(&|r| (r.bmi, r.imi())),
        curves: vec![],
        hlines: vec![],
    }
    .write(&dir.join("imi_vs_bmi.svg"))?;

    Plot {
        title: "Muscle index by age".into(),
        x_label: "age (years)".into(),
        y_label: "muscle index (ml/m2)".into(),
        series: by_sex(&|r| (r.age as f64, r.imi())),
        curves: gam_curves
            .iter()
            .map(|(sex, fit)| Curve {
                name: format!("{} trend", sex.as_str()),
                color: match sex {
                    Sex::Female => "#7b1040".to_string(),
                    Sex::Male => "#0d47a1".to_string(),
                },
                points: fit.sample_curve(120),
            })
            .collect(),
        hlines: vec![],
    }
    .write(&dir.join("imi_vs_age.svg"))?;

    Plot {
        title: "Agreement of predicted and ground-truth total volume".into(),
        x_label: "pair mean (ml)".into(),
        y_label: "predicted - truth (ml)".into(),
        series: vec![Series {
            name: "subjects".into(),
            color: "#5e35b1".into(),
            points: ba.points.clone(),
        }],
        curves: vec![],
        hlines: vec![
            HLine {
                y: ba.bias,
                label: format!("bias {:.1}", ba.bias),
            },
            HLine {
                y: ba.loa_low,
                label: format!("low {:.1}", ba.loa_low),
            },
            HLine {
                y: ba.loa_high,
                label: format!("high {:.1}", ba.loa_high),
            },
        ],
    }
    .write(&dir.join("bland_altman.svg"))?;

    let index = JsonIndex {
        summary: &report,
        bland_altman: &ba,
        gam_age_curves: gam_curves
            .iter()
            .map(|(sex, fit)| JsonCurve {
                sex: sex.as_str().to_string(),
                lambda: fit.lambda,
                points: fit.sample_curve(120),
            })
            .collect(),
        files: vec![
            "table_demographics.csv",
            "table_volumes.csv",
            "table_correlations.csv",
            "volume_vs_height.svg",
            "imi_vs_bmi.svg",
            "imi_vs_age.svg",
            "bland_altman.svg",
        ],
    };
    let json = serde_json::to_string_pretty(&index)
        .map_err(|e| CliError::Usage(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;

    println!(
        "stats: wrote tables, plots, and report.json to {dir:?} (bias {:.2} ml)",
        ba.bias
    );
    Ok(())
}

fn write_demographics(path: &Path, report: &StatsReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    w.write_record([
        "sex",
        "n",
        "age_mean",
        "age_sd",
        "height_mean",
        "height_sd",
        "weight_mean",
        "weight_sd",
        "bmi_mean",
        "bmi_sd",
    ])
    .map_err(|e| CliError::Usage(e.to_string()))?;
    for g in &report.groups {
        w.write_record([
            g.sex.as_str(),
            &g.n.to_string(),
            &g.age.mean.to_string(),
            &stat_cell(g.age.sd),
            &g.height_cm.mean.to_string(),
            &stat_cell(g.height_cm.sd),
            &g.weight_kg.mean.to_string(),
            &stat_cell(g.weight_kg.sd),
            &g.bmi.mean.to_string(),
            &stat_cell(g.bmi.sd),
        ])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn write_volumes(path: &Path, report: &StatsReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut header = vec!["metric".to_string()];
    for g in &report.groups {
        for stat in ["mean", "sd", "min", "max"] {
            header.push(format!("{}_{stat}", g.sex));
        }
    }
    header.push("between_sex_p".into());
    w.write_record(&header)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for (mi, metric) in VOLUME_METRICS.iter().enumerate() {
        let mut row = vec![metric.to_string()];
        for g in &report.groups {
            let s = &g.volumes[mi];
            row.push(s.mean.to_string());
            row.push(stat_cell(s.sd));
            row.push(s.min.to_string());
            row.push(s.max.to_string());
        }
        row.push(test_p_cell(&report.between_sex_tests[mi]));
        w.write_record(&row)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}

fn write_correlations(path: &Path, report: &StatsReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Usage(e.to_string()))?;
    w.write_record(["sex", "kind", "estimate", "statistic", "df", "p_value"])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for g in &report.groups {
        let rows: [(&str, &Option<TestResult>); 5] = [
            ("corr_total_height", &g.corr_total_height),
            ("corr_imi_bmi", &g.corr_imi_bmi),
            ("corr_imi_age", &g.corr_imi_age),
            ("lr_diff_vs_zero", &g.lr_diff_test),
            ("lr_diff_by_handedness", &g.handedness_test),
        ];
        for (kind, test) in rows {
            match test {
                Some(t) => w.write_record([
                    g.sex.as_str(),
                    kind,
                    &t.estimate.to_string(),
                    &t.statistic.to_string(),
                    &t.df.to_string(),
                    &format_p(t.p_value),
                ]),
                None => w.write_record([g.sex.as_str(), kind, "NA", "NA", "NA", "NA"]),
            }
            .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(())
}
